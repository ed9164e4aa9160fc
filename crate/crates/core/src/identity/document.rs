use serde::{Deserialize, Serialize};

use super::cert::{validate_chain, TrustStore};
use super::hierarchy::IdentityCard;
use super::passport::{validate_epassport, EPassport};
use super::{IdentityError, ValidationReport};
use crate::crypto::{PublicKey, Signature};
use crate::hash::Digest;
use crate::Timestamp;

/// Either kind of identity document accepted for registration.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Document {
    Card(IdentityCard),
    Passport(EPassport),
}

/// The part of a document that may be disclosed to a verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum PublicDocument {
    Card { chain: super::CertChain },
    Passport { passport: EPassport },
}

impl Document {
    /// Key that signs on behalf of the holder, if any.
    pub fn public_key(&self) -> Option<PublicKey> {
        match self {
            Document::Card(c) => Some(c.chain.leaf.subject_public_key),
            Document::Passport(p) => p.dg15_public_key,
        }
    }

    pub fn public_part(&self) -> PublicDocument {
        match self {
            Document::Card(c) => PublicDocument::Card { chain: c.chain.clone() },
            Document::Passport(p) => PublicDocument::Passport { passport: p.public_copy() },
        }
    }

    pub fn doc_hash(&self) -> Digest {
        self.public_part().doc_hash()
    }

    pub fn validate(&self, store: &TrustStore, now: Timestamp) -> ValidationReport {
        self.public_part().validate(store, now)
    }

    pub fn extract_unique_id(&self) -> Result<String, IdentityError> {
        self.public_part().extract_unique_id()
    }

    /// Challenge signing with the chip or card key. Ed25519 is deterministic,
    /// so signing the same message twice yields the same bytes.
    pub fn active_auth_sign(&self, message: &[u8]) -> Result<Signature, IdentityError> {
        match self {
            Document::Card(c) => Ok(c.holder_key.sign(message)),
            Document::Passport(p) => match (&p.aa_secret, p.dg15_public_key) {
                (Some(sk), Some(_)) => Ok(sk.sign(message)),
                _ => Err(IdentityError::NoActiveAuthentication),
            },
        }
    }
}

impl PublicDocument {
    pub fn public_key(&self) -> Option<PublicKey> {
        match self {
            PublicDocument::Card { chain } => Some(chain.leaf.subject_public_key),
            PublicDocument::Passport { passport } => passport.dg15_public_key,
        }
    }

    /// Hash of the document's public certificate material: the leaf
    /// certificate for cards; DG15 for passports, or DG1 when there is none.
    pub fn doc_hash(&self) -> Digest {
        match self {
            PublicDocument::Card { chain } => chain.leaf.fingerprint(),
            PublicDocument::Passport { passport } => match passport.dg15_public_key {
                Some(pk) => Digest::framed(&[b"DG15", &pk.0]),
                None => Digest::framed(&[b"DG1", &passport.dg1.to_bytes()]),
            },
        }
    }

    pub fn validate(&self, store: &TrustStore, now: Timestamp) -> ValidationReport {
        match self {
            PublicDocument::Card { chain } => validate_chain(chain, store, now, None),
            PublicDocument::Passport { passport } => validate_epassport(passport, store, now),
        }
    }

    pub fn extract_unique_id(&self) -> Result<String, IdentityError> {
        let candidate = match self {
            PublicDocument::Card { chain } => chain.leaf.unique_id_field.clone(),
            PublicDocument::Passport { passport } => {
                passport.dg11_personal_number.clone().or_else(|| Some(passport.dg1.document_number.clone()))
            }
        };
        candidate.filter(|s| !s.is_empty()).ok_or(IdentityError::MissingIdentifier)
    }
}
