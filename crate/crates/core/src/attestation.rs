//! Simulated mutual attestation between a registering client and the
//! verifier logic running on the ledger.
//!
//! There is no hardware here: an enclave identity is a hash of a code name
//! and version, a policy is the set of identities each side must present,
//! and anonymous group signatures are stood in for by fresh random tokens.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, OpenError};
use crate::hash::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EnclaveIdentity {
    pub measurement: Digest,
    pub version: u32,
}

impl EnclaveIdentity {
    pub fn new(code_name: &str, version: u32) -> Self {
        let measurement = Digest::framed(&[b"zkpoi/measurement/v1", code_name.as_bytes(), &version.to_be_bytes()]);
        EnclaveIdentity { measurement, version }
    }
}

/// Which side of the handshake presented an unexpected identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Client,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AttestationError {
    #[error("{0:?} measurement does not match policy")]
    MeasurementMismatch(Side),
    #[error("payload was not sealed under this session")]
    WrongSession,
}

impl From<OpenError> for AttestationError {
    fn from(_: OpenError) -> Self {
        AttestationError::WrongSession
    }
}

/// Accepted enclave identities for each side, plus a minimum version.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationPolicy {
    pub client: BTreeSet<EnclaveIdentity>,
    pub server: BTreeSet<EnclaveIdentity>,
    pub min_version: u32,
}

impl AttestationPolicy {
    pub fn pinned(client: EnclaveIdentity, server: EnclaveIdentity) -> Self {
        AttestationPolicy {
            client: BTreeSet::from([client]),
            server: BTreeSet::from([server]),
            min_version: client.version.min(server.version),
        }
    }

    fn admits(&self, allowed: &BTreeSet<EnclaveIdentity>, id: &EnclaveIdentity) -> bool {
        id.version >= self.min_version && allowed.contains(id)
    }
}

/// A secure channel between two attested parties. The key is never
/// serialized; nonces come from a per-session counter.
pub struct AttestationSession {
    session_key: [u8; 32],
    pub client_token: [u8; 32],
    pub peers: (EnclaveIdentity, EnclaveIdentity),
    pub policy_ok: bool,
    id: Digest,
    counter: u64,
}

impl std::fmt::Debug for AttestationSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AttestationSession")
            .field("client_token", &hex::encode(self.client_token))
            .field("peers", &self.peers)
            .field("policy_ok", &self.policy_ok)
            .finish_non_exhaustive()
    }
}

pub fn mutual_attest<R: RngCore + CryptoRng>(
    client: EnclaveIdentity,
    server: EnclaveIdentity,
    policy: &AttestationPolicy,
    rng: &mut R,
) -> Result<AttestationSession, AttestationError> {
    if !policy.admits(&policy.client, &client) {
        return Err(AttestationError::MeasurementMismatch(Side::Client));
    }
    if !policy.admits(&policy.server, &server) {
        return Err(AttestationError::MeasurementMismatch(Side::Server));
    }
    let mut session_key = [0u8; 32];
    let mut client_token = [0u8; 32];
    rng.fill_bytes(&mut session_key);
    rng.fill_bytes(&mut client_token);
    let id = Digest::framed(&[b"session", &session_key]);
    Ok(AttestationSession { session_key, client_token, peers: (client, server), policy_ok: true, id, counter: 0 })
}

impl AttestationSession {
    /// Public identifier, usable as associated data and in logs.
    pub fn id(&self) -> Digest {
        self.id
    }

    pub fn seal(&mut self, payload: &[u8]) -> Vec<u8> {
        let mut nonce = [0u8; 12];
        nonce[4..].copy_from_slice(&self.counter.to_be_bytes());
        self.counter += 1;
        crypto::seal(&self.session_key, nonce, self.id.as_bytes(), payload)
    }

    pub fn unseal(&self, sealed: &[u8]) -> Result<Vec<u8>, AttestationError> {
        Ok(crypto::open(&self.session_key, self.id.as_bytes(), sealed)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    fn ids() -> (EnclaveIdentity, EnclaveIdentity, AttestationPolicy) {
        let c = EnclaveIdentity::new("zkpoi-client", 2);
        let s = EnclaveIdentity::new("zkpoi-verifier", 2);
        (c, s, AttestationPolicy::pinned(c, s))
    }

    #[test]
    fn measurement_is_function_of_name_and_version() {
        assert_eq!(EnclaveIdentity::new("a", 1), EnclaveIdentity::new("a", 1));
        assert_ne!(EnclaveIdentity::new("a", 1), EnclaveIdentity::new("a", 2));
        assert_ne!(EnclaveIdentity::new("a", 1), EnclaveIdentity::new("b", 1));
    }

    #[test]
    fn handshake_outcomes() {
        let (c, s, policy) = ids();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(mutual_attest(c, s, &policy, &mut rng).unwrap().policy_ok);
        let tampered = EnclaveIdentity::new("zkpoi-client-patched", 2);
        assert_eq!(
            mutual_attest(tampered, s, &policy, &mut rng).unwrap_err(),
            AttestationError::MeasurementMismatch(Side::Client)
        );
        assert_eq!(
            mutual_attest(c, tampered, &policy, &mut rng).unwrap_err(),
            AttestationError::MeasurementMismatch(Side::Server)
        );
        let mut stale = policy.clone();
        stale.min_version = 3;
        assert!(mutual_attest(c, s, &stale, &mut rng).is_err());
    }

    #[test]
    fn tokens_do_not_repeat() {
        let (c, s, policy) = ids();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let tokens: HashSet<[u8; 32]> =
            (0..1000).map(|_| mutual_attest(c, s, &policy, &mut rng).unwrap().client_token).collect();
        assert_eq!(tokens.len(), 1000);
    }

    #[test]
    fn seal_round_trip_and_isolation() {
        let (c, s, policy) = ids();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut a = mutual_attest(c, s, &policy, &mut rng).unwrap();
        let b = mutual_attest(c, s, &policy, &mut rng).unwrap();
        let sealed = a.seal(b"evidence");
        assert_eq!(a.unseal(&sealed).unwrap(), b"evidence");
        assert_eq!(b.unseal(&sealed), Err(AttestationError::WrongSession));
        let empty = a.seal(b"");
        assert_eq!(a.unseal(&empty).unwrap(), b"");
        // Fresh nonce per message.
        assert_ne!(a.seal(b"x"), a.seal(b"x"));
    }
}
