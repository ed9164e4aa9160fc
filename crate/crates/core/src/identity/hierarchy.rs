use serde::{Deserialize, Serialize};

use super::cert::{CertChain, Certificate, TrustStore};
use super::IdentityError;
use crate::crypto::{SecretKey, Signature};
use crate::hash::Digest;
use crate::Timestamp;

/// 2000-01-01T00:00:00Z
pub const CA_NOT_BEFORE: Timestamp = 946_684_800;
/// 2100-01-01T00:00:00Z
pub const CA_NOT_AFTER: Timestamp = 4_102_444_800;

/// A closed validity window `[not_before, not_after]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    pub not_before: Timestamp,
    pub not_after: Timestamp,
}

impl Validity {
    pub fn new(not_before: Timestamp, not_after: Timestamp) -> Self {
        Validity { not_before, not_after }
    }

    pub fn midpoint(&self) -> Timestamp {
        self.not_before + (self.not_after - self.not_before) / 2
    }
}

/// A certification authority able to sign certificates.
#[derive(Debug, Clone)]
pub struct Authority {
    pub name: String,
    pub country: String,
    pub cert: Certificate,
    key: SecretKey,
    /// Certificates between this authority and its root, this one first.
    /// Empty for roots.
    chain_above: Vec<Certificate>,
    root_fingerprint: Digest,
    next_serial: u64,
    key_material: Digest,
}

impl Authority {
    fn new(name: String, country: String, issuer: Option<&Authority>, key_material: Digest, serial: u64) -> Authority {
        let key = SecretKey::from_seed(key_material.as_bytes());
        let mut cert = Certificate {
            version: 1,
            serial,
            issuer_name: issuer.map_or_else(|| name.clone(), |i| i.name.clone()),
            subject_name: name.clone(),
            not_before: CA_NOT_BEFORE,
            not_after: CA_NOT_AFTER,
            subject_public_key: key.public_key(),
            unique_id_field: None,
            is_ca: true,
            signature: Signature([0u8; 64]),
        };
        let signer = issuer.map_or(&key, |i| &i.key);
        cert.signature = signer.sign(&cert.tbs_bytes());
        let (chain_above, root_fingerprint) = match issuer {
            None => (Vec::new(), cert.fingerprint()),
            Some(parent) => {
                let mut above = vec![cert.clone()];
                above.extend(parent.chain_above.iter().cloned());
                (above, parent.root_fingerprint)
            }
        };
        Authority { name, country, cert, key, chain_above, root_fingerprint, next_serial: 1, key_material }
    }

    pub fn root_fingerprint(&self) -> Digest {
        self.root_fingerprint
    }

    pub fn is_root(&self) -> bool {
        self.chain_above.is_empty()
    }

    fn take_serial(&mut self) -> u64 {
        let s = self.next_serial;
        self.next_serial += 1;
        s
    }

    fn derive_key(&self, label: &[u8], serial: u64) -> SecretKey {
        let seed = Digest::framed(&[label, self.key_material.as_bytes(), &serial.to_be_bytes()]);
        SecretKey::from_seed(seed.as_bytes())
    }

    pub(crate) fn sign_cert(&self, cert: &mut Certificate) {
        cert.signature = self.key.sign(&cert.tbs_bytes());
    }

    /// Issues an end-entity certificate and returns it with the holder key
    /// that a smartcard would keep.
    pub fn issue_identity_cert(&mut self, subject: &str, unique_id: &str, validity: Validity) -> IdentityCard {
        let serial = self.take_serial();
        let holder_key = self.derive_key(b"holder", serial);
        let mut leaf = Certificate {
            version: 1,
            serial,
            issuer_name: self.name.clone(),
            subject_name: subject.to_string(),
            not_before: validity.not_before,
            not_after: validity.not_after,
            subject_public_key: holder_key.public_key(),
            unique_id_field: Some(unique_id.to_string()),
            is_ca: false,
            signature: Signature([0u8; 64]),
        };
        self.sign_cert(&mut leaf);
        IdentityCard {
            chain: CertChain { leaf, intermediates: self.chain_above.clone(), root_fingerprint: self.root_fingerprint },
            holder_key,
        }
    }

    /// Issues a Document Signing Certificate. Meaningful on a root acting as
    /// a Country Signing CA.
    pub fn issue_dsc(&mut self, validity: Validity) -> DocumentSigner {
        let serial = self.take_serial();
        let key = self.derive_key(b"dsc", serial);
        let mut cert = Certificate {
            version: 1,
            serial,
            issuer_name: self.name.clone(),
            subject_name: format!("{} DS {serial}", self.country),
            not_before: validity.not_before,
            not_after: validity.not_after,
            subject_public_key: key.public_key(),
            unique_id_field: None,
            is_ca: false,
            signature: Signature([0u8; 64]),
        };
        self.sign_cert(&mut cert);
        DocumentSigner { cert, key, country: self.country.clone(), seq: serial }
    }
}

#[derive(Debug, Clone)]
pub struct DocumentSigner {
    pub cert: Certificate,
    pub(crate) key: SecretKey,
    pub country: String,
    pub(crate) seq: u64,
}

/// A national identity card: the certificate chain plus the card-resident key.
#[derive(Debug, Clone)]
pub struct IdentityCard {
    pub chain: CertChain,
    pub(crate) holder_key: SecretKey,
}

impl IdentityCard {
    pub fn from_parts(chain: CertChain, holder_key: SecretKey) -> Self {
        IdentityCard { chain, holder_key }
    }
}

/// A generated PKI: one root per country, optionally with intermediates.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub store: TrustStore,
    pub roots: Vec<Authority>,
    /// Authorities that issue end-entity certificates: the intermediates, or
    /// the roots themselves when there are none.
    pub issuers: Vec<Authority>,
}

/// Three-letter state code for the `i`-th synthetic country.
pub fn country_code(i: usize) -> String {
    let a = (b'A' + (i / 26 % 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    format!("Z{a}{b}")
}

pub fn generate_ca_hierarchy(country_count: usize, intermediates_per_root: usize, seed: u64) -> Hierarchy {
    assert!(country_count >= 1, "at least one country is required");
    let mut store = TrustStore::default();
    let mut roots = Vec::with_capacity(country_count);
    let mut issuers = Vec::new();
    for c in 0..country_count {
        let country = country_code(c);
        let material = Digest::framed(&[b"root", &seed.to_be_bytes(), &(c as u64).to_be_bytes()]);
        let mut root = Authority::new(format!("{country} Root CA"), country.clone(), None, material, 0);
        store.add_root(root.cert.clone());
        if intermediates_per_root == 0 {
            store.allowed_authorities.insert(root.name.clone());
            issuers.push(root.clone());
        }
        for i in 0..intermediates_per_root {
            let material = Digest::framed(&[
                b"intermediate",
                &seed.to_be_bytes(),
                &(c as u64).to_be_bytes(),
                &(i as u64).to_be_bytes(),
            ]);
            let serial = root.take_serial();
            let ica =
                Authority::new(format!("{country} Issuing CA {i}"), country.clone(), Some(&root), material, serial);
            store.allowed_authorities.insert(ica.name.clone());
            issuers.push(ica);
        }
        roots.push(root);
    }
    Hierarchy { store, roots, issuers }
}

impl Hierarchy {
    pub fn issuer_mut(&mut self, name: &str) -> Result<&mut Authority, IdentityError> {
        self.issuers
            .iter_mut()
            .find(|a| a.name == name)
            .ok_or_else(|| IdentityError::UnknownAuthority(name.to_string()))
    }

    pub fn root_mut(&mut self, name: &str) -> Result<&mut Authority, IdentityError> {
        self.roots.iter_mut().find(|a| a.name == name).ok_or_else(|| IdentityError::UnknownAuthority(name.to_string()))
    }

    pub fn issue_identity_cert(
        &mut self,
        authority: &str,
        subject: &str,
        unique_id: &str,
        validity: Validity,
    ) -> Result<IdentityCard, IdentityError> {
        Ok(self.issuer_mut(authority)?.issue_identity_cert(subject, unique_id, validity))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{validate_chain, FailureCode};

    #[test]
    fn minimal_hierarchy() {
        let h = generate_ca_hierarchy(1, 0, 42);
        assert_eq!(h.store.trusted_roots.len(), 1);
        assert_eq!(h.issuers.len(), 1);
        assert!(h.issuers[0].is_root());
        assert!(h.roots.iter().all(|r| r.cert.is_self_signed()));
    }

    #[test]
    fn two_countries_one_intermediate_each() {
        let mut h = generate_ca_hierarchy(2, 1, 7);
        assert_eq!(h.store.trusted_roots.len(), 2);
        assert_eq!(h.issuers.len(), 2);
        let v = Validity::new(CA_NOT_BEFORE, CA_NOT_BEFORE + 1000);
        for i in 0..2 {
            let card = h.issuers[i].issue_identity_cert("s", "u", v);
            assert_eq!(card.chain.len(), 3);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_ca_hierarchy(3, 2, 99);
        let b = generate_ca_hierarchy(3, 2, 99);
        let c = generate_ca_hierarchy(3, 2, 100);
        assert_eq!(a.store.to_bytes(), b.store.to_bytes());
        assert_ne!(a.store.to_bytes(), c.store.to_bytes());
    }

    #[test]
    fn issue_validate_and_expiry() {
        let mut h = generate_ca_hierarchy(1, 1, 1);
        let name = h.issuers[0].name.clone();
        let v = Validity::new(1_600_000_000, 1_700_000_000);
        let card = h.issue_identity_cert(&name, "Alice", "X123", v).unwrap();
        assert!(validate_chain(&card.chain, &h.store, v.midpoint(), None).is_accepted());
        let report = validate_chain(&card.chain, &h.store, 1_800_000_000, None);
        assert_eq!(report.failure_code, Some(FailureCode::Expired));
    }

    #[test]
    fn distinct_serials_per_authority() {
        let mut h = generate_ca_hierarchy(1, 0, 3);
        let v = Validity::new(CA_NOT_BEFORE, CA_NOT_AFTER);
        let serials: Vec<u64> = (0..50)
            .map(|i| h.issuers[0].issue_identity_cert(&format!("s{i}"), &format!("u{i}"), v).chain.leaf.serial)
            .collect();
        let mut dedup = serials.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), serials.len());
    }

    #[test]
    fn unknown_authority() {
        let mut h = generate_ca_hierarchy(1, 0, 3);
        let v = Validity::new(0, 1);
        assert!(matches!(h.issue_identity_cert("nope", "s", "u", v), Err(IdentityError::UnknownAuthority(_))));
    }
}
