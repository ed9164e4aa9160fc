//! Client-side key derivation, pseudonyms, and the registration bundle with
//! its transparent verifier.
//!
//! The bundle carries the document's public part and the signature secret
//! as evidence. Verification re-runs every check the registering client
//! claims to have passed, so the evidence must only ever travel inside an
//! attested, sealed channel (see [`crate::attestation`]).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Encoder};
use crate::crypto::{self, PublicKey, SecretKey, Signature};
use crate::hash::Digest;
use crate::identity::{Document, FailureCode, IdentityError, PublicDocument, TrustStore};
use crate::Timestamp;

/// String signed by the document key to obtain the signature secret.
pub const PREFIXED_COMMON_STRING: &str = "ZKPOI-SIGNATURE-SECRET-v1";

const SIGN_PK_DOMAIN: &[u8] = b"zkpoi/sign-pk/v1";
const BINDING_DOMAIN: &[u8] = b"zkpoi/bundle/v1";
const STRENGTHENED_DOMAIN: &[u8] = b"zkpoi/aa-less-secret/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    pub iterations: u32,
    pub output_len: usize,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams { iterations: 10_000, output_len: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CredentialParams {
    pub kdf: KdfParams,
    /// Used in place of the signature secret when the document cannot sign.
    /// Deliberately heavier than `kdf`.
    pub aa_less_kdf: KdfParams,
    pub prefixed_common_string: String,
}

impl Default for CredentialParams {
    fn default() -> Self {
        CredentialParams {
            kdf: KdfParams::default(),
            aa_less_kdf: KdfParams { iterations: 40_000, output_len: 32 },
            prefixed_common_string: PREFIXED_COMMON_STRING.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CredentialError {
    #[error("a passphrase is mandatory")]
    EmptyPassphrase,
    #[error("KDF parameters out of range: {0}")]
    BadKdfParams(&'static str),
    #[error("document failed validation: {0:?}")]
    InvalidDocument(FailureCode),
    #[error("document has no active authentication key")]
    NoActiveAuthentication,
    #[error(transparent)]
    Identity(IdentityError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

impl From<IdentityError> for CredentialError {
    fn from(e: IdentityError) -> Self {
        match e {
            IdentityError::NoActiveAuthentication => CredentialError::NoActiveAuthentication,
            other => CredentialError::Identity(other),
        }
    }
}

/// Client-side key pair, reproducible from passphrase and document.
#[derive(Debug, Clone)]
pub struct DerivedKeyPair {
    pub pk: PublicKey,
    sk: SecretKey,
}

impl DerivedKeyPair {
    pub fn secret_key(&self) -> &SecretKey {
        &self.sk
    }
}

fn kdf(passphrase: &str, salt: &Digest, params: KdfParams) -> Result<Vec<u8>, CredentialError> {
    if passphrase.is_empty() {
        return Err(CredentialError::EmptyPassphrase);
    }
    if params.iterations == 0 {
        return Err(CredentialError::BadKdfParams("iterations must be at least 1"));
    }
    if params.output_len == 0 || params.output_len > 1024 {
        return Err(CredentialError::BadKdfParams("output_len must be in 1..=1024"));
    }
    let mut out = vec![0u8; params.output_len];
    crypto::pbkdf2_sha256(passphrase.as_bytes(), salt.as_bytes(), params.iterations, &mut out);
    Ok(out)
}

/// PBKDF2 over the passphrase, salted with the document hash; the output is
/// hashed down to an Ed25519 seed.
pub fn derive_keypair(
    passphrase: &str,
    doc_hash: &Digest,
    params: KdfParams,
) -> Result<DerivedKeyPair, CredentialError> {
    let okm = kdf(passphrase, doc_hash, params)?;
    let seed = Digest::framed(&[b"zkpoi/keypair/v1", &okm]);
    let sk = SecretKey::from_seed(seed.as_bytes());
    Ok(DerivedKeyPair { pk: sk.public_key(), sk })
}

pub fn compute_signature_secret(doc: &Document, prefixed_common_string: &str) -> Result<Signature, CredentialError> {
    Ok(doc.active_auth_sign(prefixed_common_string.as_bytes())?)
}

/// Replacement for the signature secret on documents without a signing key.
pub fn strengthened_secret(passphrase: &str, doc_hash: &Digest, params: KdfParams) -> Result<Digest, CredentialError> {
    let okm = kdf(passphrase, doc_hash, params)?;
    Ok(Digest::framed(&[STRENGTHENED_DOMAIN, &okm]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Suffix {
    Reg,
    Off,
}

impl Suffix {
    pub fn as_str(self) -> &'static str {
        match self {
            Suffix::Reg => "REG",
            Suffix::Off => "OFF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pseudonym {
    pub digest: Digest,
    pub suffix: Suffix,
}

impl Pseudonym {
    pub fn with_suffix(self, suffix: Suffix) -> Pseudonym {
        Pseudonym { suffix, ..self }
    }
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.digest.to_hex(), self.suffix.as_str())
    }
}

/// Hash of the length-framed `secret ‖ blockchain_id ‖ unique_id`; the
/// suffix is appended outside the hash.
pub fn derive_pseudonym(signature_secret: &[u8], blockchain_id: &str, unique_id: &str, suffix: Suffix) -> Pseudonym {
    let digest = Digest::framed(&[signature_secret, blockchain_id.as_bytes(), unique_id.as_bytes()]);
    Pseudonym { digest, suffix }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AaMode {
    Full,
    Absent,
}

/// What the verifier needs to re-execute the registration checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransparentEvidence {
    pub document: PublicDocument,
    pub signature_secret: Option<Signature>,
    /// Set instead of `signature_secret` when the document cannot sign.
    pub strengthened_secret: Option<Digest>,
    /// Signature by the derived key over pseudonym, suffix and `pk`.
    pub binding: Signature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationBundle {
    pub pseudonym: Pseudonym,
    pub pk: PublicKey,
    pub sign_pk: Option<Signature>,
    pub evidence: TransparentEvidence,
}

impl RegistrationBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("bundle serialization cannot fail")
    }

    pub fn from_bytes(raw: &[u8]) -> Result<RegistrationBundle, CredentialError> {
        serde_json::from_slice(raw).map_err(|_| CredentialError::Decode(DecodeError::Truncated))
    }

    /// The on-chain portion: everything except the evidence.
    pub fn public_record(&self) -> (Pseudonym, PublicKey, Option<Signature>) {
        (self.pseudonym, self.pk, self.sign_pk)
    }
}

fn sign_pk_message(pk: &PublicKey) -> Vec<u8> {
    let mut e = Encoder::new();
    e.fixed(SIGN_PK_DOMAIN).fixed(&pk.0);
    e.finish()
}

fn binding_message(pseudonym: &Pseudonym, pk: &PublicKey) -> Vec<u8> {
    let mut e = Encoder::new();
    e.fixed(BINDING_DOMAIN).fixed(pseudonym.digest.as_bytes()).str(pseudonym.suffix.as_str()).fixed(&pk.0);
    e.finish()
}

#[derive(Debug, Clone)]
pub struct BundleRequest<'a> {
    pub doc: &'a Document,
    pub passphrase: &'a str,
    pub blockchain_id: &'a str,
    pub trust_store: &'a TrustStore,
    pub now: Timestamp,
    pub aa_mode: AaMode,
    pub suffix: Suffix,
}

pub fn build_bundle(req: &BundleRequest<'_>, params: &CredentialParams) -> Result<RegistrationBundle, CredentialError> {
    let report = req.doc.validate(req.trust_store, req.now);
    if let Some(code) = report.failure_code {
        return Err(CredentialError::InvalidDocument(code));
    }
    let doc_hash = req.doc.doc_hash();
    let keys = derive_keypair(req.passphrase, &doc_hash, params.kdf)?;
    let unique_id = req.doc.extract_unique_id()?;

    let (signature_secret, strengthened, sign_pk) = match req.aa_mode {
        AaMode::Full => {
            let secret = compute_signature_secret(req.doc, &params.prefixed_common_string)?;
            let sign_pk = req.doc.active_auth_sign(&sign_pk_message(&keys.pk))?;
            (Some(secret), None, Some(sign_pk))
        }
        AaMode::Absent => (None, Some(strengthened_secret(req.passphrase, &doc_hash, params.aa_less_kdf)?), None),
    };
    let secret_bytes: &[u8] = match (&signature_secret, &strengthened) {
        (Some(s), _) => s.as_bytes(),
        (None, Some(d)) => d.as_bytes(),
        (None, None) => unreachable!(),
    };
    let pseudonym = derive_pseudonym(secret_bytes, req.blockchain_id, &unique_id, req.suffix);
    let binding = keys.sk.sign(&binding_message(&pseudonym, &keys.pk));
    Ok(RegistrationBundle {
        pseudonym,
        pk: keys.pk,
        sign_pk,
        evidence: TransparentEvidence {
            document: req.doc.public_part(),
            signature_secret,
            strengthened_secret: strengthened,
            binding,
        },
    })
}

#[allow(clippy::too_many_arguments)]
pub fn build_registration_bundle(
    doc: &Document,
    passphrase: &str,
    blockchain_id: &str,
    trust_store: &TrustStore,
    now: Timestamp,
    aa_mode: AaMode,
    params: &CredentialParams,
) -> Result<RegistrationBundle, CredentialError> {
    let req = BundleRequest { doc, passphrase, blockchain_id, trust_store, now, aa_mode, suffix: Suffix::Reg };
    build_bundle(&req, params)
}

/// The removal request: same derivation, `OFF` suffix.
pub fn build_offline_bundle(
    doc: &Document,
    passphrase: &str,
    blockchain_id: &str,
    trust_store: &TrustStore,
    now: Timestamp,
    aa_mode: AaMode,
    params: &CredentialParams,
) -> Result<RegistrationBundle, CredentialError> {
    let req = BundleRequest { doc, passphrase, blockchain_id, trust_store, now, aa_mode, suffix: Suffix::Off };
    build_bundle(&req, params)
}

/// First check a bundle failed, numbered after the client-side steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BundleRejection {
    /// The document did not validate.
    Document(FailureCode),
    UniqueId,
    Pseudonym,
    SignPk,
    SignatureSecret,
    /// The derived key did not sign this pseudonym, suffix and key.
    Binding,
}

impl BundleRejection {
    pub fn step(&self) -> u8 {
        match self {
            BundleRejection::Document(_) => 3,
            BundleRejection::UniqueId => 4,
            BundleRejection::Pseudonym => 5,
            BundleRejection::SignPk => 6,
            BundleRejection::SignatureSecret => 7,
            BundleRejection::Binding => 8,
        }
    }
}

/// Verified facts about an accepted bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedBundle {
    pub pseudonym: Pseudonym,
    pub pk: PublicKey,
    pub unique_id: String,
}

pub fn verify_registration_bundle(
    bundle: &RegistrationBundle,
    trust_store: &TrustStore,
    blockchain_id: &str,
    now: Timestamp,
    params: &CredentialParams,
) -> Result<VerifiedBundle, BundleRejection> {
    let ev = &bundle.evidence;
    let report = ev.document.validate(trust_store, now);
    if let Some(code) = report.failure_code {
        return Err(BundleRejection::Document(code));
    }
    let unique_id = ev.document.extract_unique_id().map_err(|_| BundleRejection::UniqueId)?;

    let secret_bytes: &[u8] = match (&ev.signature_secret, &ev.strengthened_secret) {
        (Some(s), None) => s.as_bytes(),
        (None, Some(d)) => d.as_bytes(),
        _ => return Err(BundleRejection::Pseudonym),
    };
    let expected = derive_pseudonym(secret_bytes, blockchain_id, &unique_id, bundle.pseudonym.suffix);
    if expected != bundle.pseudonym {
        return Err(BundleRejection::Pseudonym);
    }

    if let Some(secret) = &ev.signature_secret {
        let doc_pk = ev.document.public_key().ok_or(BundleRejection::SignPk)?;
        let sign_pk = bundle.sign_pk.as_ref().ok_or(BundleRejection::SignPk)?;
        if !doc_pk.verify(&sign_pk_message(&bundle.pk), sign_pk) {
            return Err(BundleRejection::SignPk);
        }
        if !doc_pk.verify(params.prefixed_common_string.as_bytes(), secret) {
            return Err(BundleRejection::SignatureSecret);
        }
    } else if bundle.sign_pk.is_some() {
        return Err(BundleRejection::SignPk);
    }

    if !bundle.pk.verify(&binding_message(&bundle.pseudonym, &bundle.pk), &ev.binding) {
        return Err(BundleRejection::Binding);
    }
    Ok(VerifiedBundle { pseudonym: bundle.pseudonym, pk: bundle.pk, unique_id })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{
        generate_ca_hierarchy, issue_epassport, Hierarchy, HolderFields, Validity, CA_NOT_AFTER, CA_NOT_BEFORE,
    };

    const NOW: Timestamp = 1_700_000_000;
    const CHAIN: &str = "testnet";

    fn fast() -> CredentialParams {
        CredentialParams {
            kdf: KdfParams { iterations: 16, output_len: 32 },
            aa_less_kdf: KdfParams { iterations: 64, output_len: 32 },
            ..CredentialParams::default()
        }
    }

    fn card(h: &mut Hierarchy, uid: &str) -> Document {
        let v = Validity::new(NOW - 1000, NOW + 1000);
        Document::Card(h.issuers[0].issue_identity_cert(&format!("holder {uid}"), uid, v))
    }

    fn passport(h: &mut Hierarchy, with_aa: bool) -> Document {
        let dsc = h.roots[0].issue_dsc(Validity::new(CA_NOT_BEFORE, CA_NOT_AFTER));
        let holder = HolderFields::new("DOE<<JANE", "D7", "ZAA", NOW + 86_400 * 100);
        Document::Passport(issue_epassport(&h.roots[0], &dsc, &holder, with_aa, 3).unwrap())
    }

    #[test]
    fn keypair_determinism_and_sensitivity() {
        let d = Digest::of(b"doc");
        let p = KdfParams { iterations: 10, output_len: 32 };
        let a = derive_keypair("a", &d, p).unwrap();
        assert_eq!(a.pk, derive_keypair("a", &d, p).unwrap().pk);
        assert_ne!(a.pk, derive_keypair("b", &d, p).unwrap().pk);
        let p1 = KdfParams { iterations: 1, output_len: 32 };
        let p2 = KdfParams { iterations: 10_000, output_len: 32 };
        assert_ne!(derive_keypair("a", &d, p1).unwrap().pk, derive_keypair("a", &d, p2).unwrap().pk);
        assert_eq!(derive_keypair("", &d, p).unwrap_err(), CredentialError::EmptyPassphrase);
    }

    #[test]
    fn kdf_cost_grows_with_iterations() {
        let d = Digest::of(b"doc");
        let time = |iterations| {
            let start = std::time::Instant::now();
            derive_keypair("pw", &d, KdfParams { iterations, output_len: 32 }).unwrap();
            start.elapsed()
        };
        let cheap = time(1);
        let dear = time(200_000);
        assert!(dear >= cheap);
    }

    #[test]
    fn signature_secret_properties() {
        let mut h = generate_ca_hierarchy(1, 0, 1);
        let a = card(&mut h, "A");
        let b = card(&mut h, "B");
        let sa = compute_signature_secret(&a, PREFIXED_COMMON_STRING).unwrap();
        assert_eq!(sa, compute_signature_secret(&a, PREFIXED_COMMON_STRING).unwrap());
        assert_ne!(sa, compute_signature_secret(&b, PREFIXED_COMMON_STRING).unwrap());
        assert!(a.public_key().unwrap().verify(PREFIXED_COMMON_STRING.as_bytes(), &sa));
    }

    #[test]
    fn pseudonym_suffix_and_chain_separation() {
        let reg = derive_pseudonym(b"s", "chain-a", "u", Suffix::Reg);
        let off = derive_pseudonym(b"s", "chain-a", "u", Suffix::Off);
        assert_eq!(reg.digest, off.digest);
        assert_ne!(reg, off);
        assert_ne!(reg.digest, derive_pseudonym(b"s", "chain-b", "u", Suffix::Reg).digest);
        // Framing: moving a byte across a field boundary changes the digest.
        assert_ne!(derive_pseudonym(b"s", "ab", "c", Suffix::Reg), derive_pseudonym(b"s", "a", "bc", Suffix::Reg));
    }

    #[test]
    fn card_bundle_round_trip() {
        let mut h = generate_ca_hierarchy(1, 1, 2);
        let doc = card(&mut h, "U1");
        let b = build_registration_bundle(&doc, "pw", CHAIN, &h.store, NOW, AaMode::Full, &fast()).unwrap();
        let v = verify_registration_bundle(&b, &h.store, CHAIN, NOW, &fast()).unwrap();
        assert_eq!(v.unique_id, "U1");
        let back = RegistrationBundle::from_bytes(&b.to_bytes()).unwrap();
        assert_eq!(back, b);
        // Same identity on another chain verifies only there.
        assert_eq!(verify_registration_bundle(&b, &h.store, "other", NOW, &fast()), Err(BundleRejection::Pseudonym));
    }

    #[test]
    fn expired_card_is_invalid_document() {
        let mut h = generate_ca_hierarchy(1, 0, 2);
        let doc = card(&mut h, "U1");
        let err =
            build_registration_bundle(&doc, "pw", CHAIN, &h.store, NOW + 5000, AaMode::Full, &fast()).unwrap_err();
        assert_eq!(err, CredentialError::InvalidDocument(FailureCode::Expired));
    }

    #[test]
    fn aa_less_passport() {
        let mut h = generate_ca_hierarchy(1, 0, 4);
        let doc = passport(&mut h, false);
        assert_eq!(
            build_registration_bundle(&doc, "pw", CHAIN, &h.store, NOW, AaMode::Full, &fast()).unwrap_err(),
            CredentialError::NoActiveAuthentication
        );
        let b = build_registration_bundle(&doc, "pw", CHAIN, &h.store, NOW, AaMode::Absent, &fast()).unwrap();
        assert!(b.sign_pk.is_none());
        assert!(b.evidence.signature_secret.is_none());
        assert!(verify_registration_bundle(&b, &h.store, CHAIN, NOW, &fast()).is_ok());
    }

    #[test]
    fn aa_passport_full_mode() {
        let mut h = generate_ca_hierarchy(1, 0, 4);
        let doc = passport(&mut h, true);
        let b = build_registration_bundle(&doc, "pw", CHAIN, &h.store, NOW, AaMode::Full, &fast()).unwrap();
        assert!(verify_registration_bundle(&b, &h.store, CHAIN, NOW, &fast()).is_ok());
        let json = serde_json::to_string(&b).unwrap();
        assert!(!json.contains("aa_secret"));
    }

    #[test]
    fn tampering_is_caught_at_the_right_step() {
        let mut h = generate_ca_hierarchy(1, 0, 5);
        let a = card(&mut h, "A");
        let b = card(&mut h, "B");
        let params = fast();
        let ba = build_registration_bundle(&a, "pw", CHAIN, &h.store, NOW, AaMode::Full, &params).unwrap();
        let bb = build_registration_bundle(&b, "pw", CHAIN, &h.store, NOW, AaMode::Full, &params).unwrap();
        let verify = |x: &RegistrationBundle| verify_registration_bundle(x, &h.store, CHAIN, NOW, &params);

        let mut t = ba.clone();
        t.pseudonym.digest.0[0] ^= 1;
        assert_eq!(verify(&t), Err(BundleRejection::Pseudonym));

        let mut t = ba.clone();
        t.sign_pk = bb.sign_pk;
        assert_eq!(verify(&t).unwrap_err().step(), 6);

        let mut t = ba.clone();
        t.evidence.signature_secret = bb.evidence.signature_secret;
        assert_eq!(verify(&t), Err(BundleRejection::Pseudonym));

        let mut t = ba.clone();
        t.pseudonym.suffix = Suffix::Off;
        assert_eq!(verify(&t), Err(BundleRejection::Binding));

        let mut t = ba.clone();
        t.pk = bb.pk;
        assert_eq!(verify(&t), Err(BundleRejection::SignPk));
    }

    #[test]
    fn offline_bundle_shares_digest() {
        let mut h = generate_ca_hierarchy(1, 0, 6);
        let doc = card(&mut h, "A");
        let reg = build_registration_bundle(&doc, "pw", CHAIN, &h.store, NOW, AaMode::Full, &fast()).unwrap();
        let off = build_offline_bundle(&doc, "pw", CHAIN, &h.store, NOW, AaMode::Full, &fast()).unwrap();
        assert_eq!(reg.pseudonym.digest, off.pseudonym.digest);
        assert_eq!(off.pseudonym.suffix, Suffix::Off);
        assert!(verify_registration_bundle(&off, &h.store, CHAIN, NOW, &fast()).is_ok());
    }
}
