//! Randomized document mutations, each paired with the failure code a
//! validator must report for it.

use rand::Rng;
use serde::{Deserialize, Serialize};
use zkpoi_core::identity::{Document, FailureCode, PublicDocument, TrustStore};
use zkpoi_core::Timestamp;

use crate::population::DocKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    Expired,
    TamperedSignature,
    BrokenChain,
    UntrustedRoot,
    SodHashMismatch,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::Expired,
        Mutation::TamperedSignature,
        Mutation::BrokenChain,
        Mutation::UntrustedRoot,
        Mutation::SodHashMismatch,
    ];

    pub fn expected(self) -> FailureCode {
        match self {
            Mutation::Expired => FailureCode::Expired,
            Mutation::TamperedSignature => FailureCode::BadSignature,
            Mutation::BrokenChain => FailureCode::ChainBroken,
            Mutation::UntrustedRoot => FailureCode::NotTrusted,
            Mutation::SodHashMismatch => FailureCode::HashMismatch,
        }
    }

    /// Whether the mutation makes sense for this kind of document.
    pub fn applies_to(self, kind: DocKind) -> bool {
        match self {
            Mutation::BrokenChain => kind == DocKind::Card,
            Mutation::SodHashMismatch => kind == DocKind::Passport,
            _ => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mutation::Expired => "expired",
            Mutation::TamperedSignature => "tampered-signature",
            Mutation::BrokenChain => "broken-chain",
            Mutation::UntrustedRoot => "untrusted-root",
            Mutation::SodHashMismatch => "sod-hash-mismatch",
        }
    }
}

/// A mutated public document and the context to validate it in.
#[derive(Debug, Clone)]
pub struct Mutant {
    pub document: PublicDocument,
    pub store: TrustStore,
    pub now: Timestamp,
}

fn flip_bit(bytes: &mut [u8], rng: &mut impl Rng) {
    let i = rng.gen_range(0..bytes.len());
    bytes[i] ^= 1 << rng.gen_range(0..8);
}

/// `foreign` is a trust store that shares no roots with `store`.
pub fn mutate(
    doc: &Document,
    mutation: Mutation,
    store: &TrustStore,
    foreign: &TrustStore,
    now: Timestamp,
    rng: &mut impl Rng,
) -> Option<Mutant> {
    let mut document = doc.public_part();
    let mut out_store = store.clone();
    let mut out_now = now;
    match (mutation, &mut document) {
        (Mutation::Expired, PublicDocument::Card { chain }) => {
            out_now = chain.leaf.not_after + rng.gen_range(1..10 * 365 * 86_400);
        }
        (Mutation::Expired, PublicDocument::Passport { passport }) => {
            out_now = passport.expiry()? + rng.gen_range(1..10 * 365 * 86_400);
        }
        (Mutation::TamperedSignature, PublicDocument::Card { chain }) => flip_bit(&mut chain.leaf.signature.0, rng),
        (Mutation::TamperedSignature, PublicDocument::Passport { passport }) => {
            flip_bit(&mut passport.sod.signature.0, rng)
        }
        (Mutation::BrokenChain, PublicDocument::Card { chain }) => {
            if chain.intermediates.is_empty() {
                return None;
            }
            let i = rng.gen_range(0..chain.intermediates.len());
            chain.intermediates.remove(i);
        }
        (Mutation::UntrustedRoot, _) => out_store = foreign.clone(),
        (Mutation::SodHashMismatch, PublicDocument::Passport { passport }) => {
            let name = &mut passport.dg1.name;
            let pos = rng.gen_range(0..name.len());
            let replacement = (b'A' + rng.gen_range(0..26u8)) as char;
            let current = name.as_bytes()[pos] as char;
            let replacement = if replacement == current {
                if current == 'Z' {
                    'A'
                } else {
                    'Z'
                }
            } else {
                replacement
            };
            name.replace_range(pos..pos + 1, &replacement.to_string());
        }
        _ => return None,
    }
    Some(Mutant { document, store: out_store, now: out_now })
}
