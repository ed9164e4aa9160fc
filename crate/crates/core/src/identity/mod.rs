//! Synthetic PKI: national identity cards backed by X.509-style chains and
//! ePassports protected by a Document Security Object.

mod cert;
pub mod dates;
mod document;
mod hierarchy;
mod passport;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cert::{validate_chain, validate_encoded_chain, CertChain, Certificate, RevocationList, TrustStore};
pub use document::{Document, PublicDocument};
pub use hierarchy::{
    country_code, generate_ca_hierarchy, Authority, DocumentSigner, Hierarchy, IdentityCard, Validity, CA_NOT_AFTER,
    CA_NOT_BEFORE,
};
pub use passport::{
    check_digit, issue_epassport, validate_epassport, Dg1, EPassport, HolderFields, SecurityObject, DG1, DG11, DG15,
};

use crate::codec::DecodeError;
use crate::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureCode {
    GrammarError,
    Expired,
    Revoked,
    ChainBroken,
    BadSignature,
    NotTrusted,
    HashMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub failure_code: Option<FailureCode>,
    pub checked_at: Timestamp,
}

impl ValidationReport {
    pub fn accepted(now: Timestamp) -> Self {
        ValidationReport { verdict: Verdict::Accepted, failure_code: None, checked_at: now }
    }

    pub fn rejected(code: FailureCode, now: Timestamp) -> Self {
        ValidationReport { verdict: Verdict::Rejected, failure_code: Some(code), checked_at: now }
    }

    pub fn is_accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("unknown authority `{0}`")]
    UnknownAuthority(String),
    #[error("document carries no unique identifier")]
    MissingIdentifier,
    #[error("document has no active authentication key")]
    NoActiveAuthentication,
    #[error("document signer certificate was not issued by this CSCA")]
    DscNotSignedByCsca,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}
