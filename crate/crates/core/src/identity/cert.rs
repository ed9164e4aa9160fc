use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FailureCode, ValidationReport};
use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{PublicKey, Signature};
use crate::hash::Digest;
use crate::Timestamp;

const CERT_VERSION: u8 = 1;
const TBS_DOMAIN: &[u8] = b"zkpoi/cert/v1";

/// A synthetic X.509-style certificate. Only the logical fields the chain
/// validator needs are modelled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub version: u8,
    pub serial: u64,
    pub issuer_name: String,
    pub subject_name: String,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub subject_public_key: PublicKey,
    /// National identifier. Real cards carry it under country-specific
    /// OIDs; the fixture model has one explicit field.
    pub unique_id_field: Option<String>,
    pub is_ca: bool,
    pub signature: Signature,
}

impl Certificate {
    pub(crate) fn encode_tbs(&self, e: &mut Encoder) {
        e.u8(self.version)
            .u64(self.serial)
            .str(&self.issuer_name)
            .str(&self.subject_name)
            .i64(self.not_before)
            .i64(self.not_after)
            .fixed(&self.subject_public_key.0)
            .opt_str(self.unique_id_field.as_deref())
            .bool(self.is_ca);
    }

    /// The signed portion, prefixed with a domain tag.
    pub fn tbs_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.fixed(TBS_DOMAIN);
        self.encode_tbs(&mut e);
        e.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode_tbs(&mut e);
        e.fixed(&self.signature.0);
        e.finish()
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Certificate, DecodeError> {
        let mut d = Decoder::new(raw);
        let cert = Self::decode(&mut d)?;
        d.finish()?;
        Ok(cert)
    }

    pub(crate) fn decode(d: &mut Decoder<'_>) -> Result<Certificate, DecodeError> {
        let version = d.u8()?;
        if version != CERT_VERSION {
            return Err(DecodeError::Version(version));
        }
        Ok(Certificate {
            version,
            serial: d.u64()?,
            issuer_name: d.str()?,
            subject_name: d.str()?,
            not_before: d.i64()?,
            not_after: d.i64()?,
            subject_public_key: PublicKey(d.fixed()?),
            unique_id_field: d.opt_str()?,
            is_ca: d.bool()?,
            signature: Signature(d.fixed()?),
        })
    }

    pub fn fingerprint(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }

    pub fn is_self_signed(&self) -> bool {
        self.issuer_name == self.subject_name && self.subject_public_key.verify(&self.tbs_bytes(), &self.signature)
    }

    pub fn verify_issued_by(&self, issuer_key: &PublicKey) -> bool {
        issuer_key.verify(&self.tbs_bytes(), &self.signature)
    }

    pub fn valid_at(&self, now: Timestamp) -> bool {
        self.not_before <= now && now <= self.not_after
    }

    /// Structural checks beyond decoding.
    fn well_formed(&self) -> bool {
        self.version == CERT_VERSION
            && !self.subject_name.is_empty()
            && !self.issuer_name.is_empty()
            && self.not_before < self.not_after
            && Certificate::from_bytes(&self.to_bytes()).as_ref() == Ok(self)
    }
}

/// Leaf first, then intermediates walking towards the root. The root itself
/// is named by fingerprint and resolved against a [`TrustStore`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertChain {
    pub leaf: Certificate,
    pub intermediates: Vec<Certificate>,
    pub root_fingerprint: Digest,
}

impl CertChain {
    /// Number of certificates including the root.
    pub fn len(&self) -> usize {
        self.intermediates.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn non_root(&self) -> impl Iterator<Item = &Certificate> {
        std::iter::once(&self.leaf).chain(self.intermediates.iter())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.bytes(&self.leaf.to_bytes());
        e.u32(self.intermediates.len() as u32);
        for c in &self.intermediates {
            e.bytes(&c.to_bytes());
        }
        e.fixed(self.root_fingerprint.as_bytes());
        e.finish()
    }

    pub fn from_bytes(raw: &[u8]) -> Result<CertChain, DecodeError> {
        let mut d = Decoder::new(raw);
        let chain = Self::decode(&mut d)?;
        d.finish()?;
        Ok(chain)
    }

    pub(crate) fn decode(d: &mut Decoder<'_>) -> Result<CertChain, DecodeError> {
        let leaf = Certificate::from_bytes(d.bytes()?)?;
        let n = d.u32()? as usize;
        let mut intermediates = Vec::with_capacity(n.min(16));
        for _ in 0..n {
            intermediates.push(Certificate::from_bytes(d.bytes()?)?);
        }
        Ok(CertChain { leaf, intermediates, root_fingerprint: Digest(d.fixed()?) })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustStore {
    pub trusted_roots: BTreeMap<Digest, Certificate>,
    /// Names of the authorities allowed to issue end-entity certificates.
    pub allowed_authorities: BTreeSet<String>,
}

impl TrustStore {
    pub fn add_root(&mut self, root: Certificate) -> Digest {
        let fp = root.fingerprint();
        self.trusted_roots.insert(fp, root);
        fp
    }

    pub fn root(&self, fingerprint: &Digest) -> Option<&Certificate> {
        self.trusted_roots.get(fingerprint)
    }

    pub fn roots_named<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = &'a Certificate> {
        self.trusted_roots.values().filter(move |c| c.subject_name == subject)
    }

    /// Merges another store into this one.
    pub fn extend(&mut self, other: &TrustStore) {
        self.trusted_roots.extend(other.trusted_roots.iter().map(|(k, v)| (*k, v.clone())));
        self.allowed_authorities.extend(other.allowed_authorities.iter().cloned());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u32(self.trusted_roots.len() as u32);
        for root in self.trusted_roots.values() {
            e.bytes(&root.to_bytes());
        }
        e.u32(self.allowed_authorities.len() as u32);
        for name in &self.allowed_authorities {
            e.str(name);
        }
        e.finish()
    }

    pub fn from_bytes(raw: &[u8]) -> Result<TrustStore, DecodeError> {
        let mut d = Decoder::new(raw);
        let mut store = TrustStore::default();
        for _ in 0..d.u32()? {
            store.add_root(Certificate::from_bytes(d.bytes()?)?);
        }
        for _ in 0..d.u32()? {
            store.allowed_authorities.insert(d.str()?);
        }
        d.finish()?;
        Ok(store)
    }
}

/// Revoked `(issuer name, serial)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationList(pub BTreeSet<(String, u64)>);

impl RevocationList {
    pub fn revoke(&mut self, cert: &Certificate) {
        self.0.insert((cert.issuer_name.clone(), cert.serial));
    }

    pub fn contains(&self, cert: &Certificate) -> bool {
        self.0.contains(&(cert.issuer_name.clone(), cert.serial))
    }
}

/// Chain validation in five steps: grammar, validity period, revocation
/// (only when a list is supplied), issuer/signature linkage, trusted root.
pub fn validate_chain(
    chain: &CertChain,
    store: &TrustStore,
    now: Timestamp,
    crl: Option<&RevocationList>,
) -> ValidationReport {
    let reject = |code| ValidationReport::rejected(code, now);
    let root = store.root(&chain.root_fingerprint);

    if !chain.non_root().all(Certificate::well_formed) {
        return reject(FailureCode::GrammarError);
    }
    if !chain.non_root().chain(root).all(|c| c.valid_at(now)) {
        return reject(FailureCode::Expired);
    }
    if let Some(crl) = crl {
        if chain.non_root().any(|c| crl.contains(c)) {
            return reject(FailureCode::Revoked);
        }
    }

    let certs: Vec<&Certificate> = chain.non_root().collect();
    for pair in certs.windows(2) {
        let (child, parent) = (pair[0], pair[1]);
        if child.issuer_name != parent.subject_name || !parent.is_ca {
            return reject(FailureCode::ChainBroken);
        }
        if !child.verify_issued_by(&parent.subject_public_key) {
            return reject(FailureCode::BadSignature);
        }
    }

    let Some(root) = root else {
        return reject(FailureCode::NotTrusted);
    };
    let top = certs[certs.len() - 1];
    if top.issuer_name != root.subject_name {
        return reject(FailureCode::ChainBroken);
    }
    if !top.verify_issued_by(&root.subject_public_key) {
        return reject(FailureCode::BadSignature);
    }
    if !root.is_ca || !root.is_self_signed() {
        return reject(FailureCode::NotTrusted);
    }
    if !store.allowed_authorities.contains(&chain.leaf.issuer_name) {
        return reject(FailureCode::NotTrusted);
    }
    ValidationReport::accepted(now)
}

/// Decodes each blob before validating, so that malformed encodings surface
/// as [`FailureCode::GrammarError`].
pub fn validate_encoded_chain(
    raw: &[u8],
    store: &TrustStore,
    now: Timestamp,
    crl: Option<&RevocationList>,
) -> ValidationReport {
    match CertChain::from_bytes(raw) {
        Ok(chain) => validate_chain(&chain, store, now, crl),
        Err(_) => ValidationReport::rejected(FailureCode::GrammarError, now),
    }
}
