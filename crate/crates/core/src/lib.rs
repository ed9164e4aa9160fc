//! Sybil-resistant miner registration from government-issued identity
//! documents, and the incentive models that go with it.
//!
//! The crate is split along the lifecycle of a miner:
//!
//! - [`identity`]: a synthetic PKI (national identity cards and ePassports)
//!   and the chain / Document Security Object validators.
//! - [`credential`]: deterministic key derivation, signature secrets,
//!   per-blockchain pseudonyms and the registration bundle verifier.
//! - [`attestation`]: simulated mutual attestation and sealed channels.
//! - [`registry`]: the ledger enforcing one pseudonym per identity, with an
//!   encrypted identifier database and a hash-tree accumulator.
//! - [`shardgame`]: the per-epoch cooperate/defect game on a sharded chain,
//!   its equilibrium thresholds and two incentive-compatible protocols.
//! - [`econ`]: congestion games, dominance and ESS analysis, network-effect
//!   dynamics and the stationary circulation equilibrium.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attestation;
pub mod codec;
pub mod credential;
pub mod crypto;
pub mod econ;
pub mod hash;
pub mod identity;
pub mod registry;
pub mod shardgame;

pub use hash::Digest;

/// Seconds since the Unix epoch.
pub type Timestamp = i64;
