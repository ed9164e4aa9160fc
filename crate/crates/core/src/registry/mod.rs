//! The simulated ledger that admits at most one online pseudonym per
//! identity.
//!
//! Registration and removal requests arrive sealed under an attestation
//! session. Only code in this module opens them; what it persists in the
//! clear is the public record (pseudonym, key, `sign_pk`) and an append-only
//! log. Unique identifiers go into an [`EncryptedIdDb`].

mod accumulator;
mod iddb;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use accumulator::{Accumulator, AccumulatorError, NonMembershipProof, PathProof, Witness};
pub use iddb::{EncryptedIdDb, IdRecord, IdStatus};

use crate::attestation::{AttestationError, AttestationSession};
use crate::credential::{
    verify_registration_bundle, BundleRejection, CredentialParams, Pseudonym, RegistrationBundle, Suffix,
};
use crate::crypto::{self, PublicKey, Signature};
use crate::hash::Digest;
use crate::identity::{PublicDocument, TrustStore};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("no attested session")]
    NoSession,
    #[error(transparent)]
    Attestation(#[from] AttestationError),
    #[error("malformed bundle")]
    Malformed,
    #[error("bundle rejected at step {step}: {0:?}", step = .0.step())]
    InvalidBundle(BundleRejection),
    #[error("identity is already registered")]
    DuplicateIdentity,
    #[error("expected a {expected:?} request")]
    WrongSuffix { expected: Suffix },
    #[error("registration proof replayed as a removal request")]
    ReplayedRegProof,
    #[error("no online entry for this pseudonym")]
    UnknownPseudonym,
    #[error("malformed log line {line}: {reason}")]
    Log { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub pseudonym: Pseudonym,
    pub pk: PublicKey,
    pub sign_pk: Option<Signature>,
    pub status: EntryStatus,
    pub registered_at: u64,
}

/// Identity attributes that may be bound into the accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    UniqueId,
    Name,
    DateOfBirth,
    Nationality,
}

impl Attribute {
    fn read(self, doc: &PublicDocument) -> String {
        match (self, doc) {
            (Attribute::UniqueId, _) => doc.extract_unique_id().unwrap_or_default(),
            (Attribute::Name, PublicDocument::Card { chain }) => chain.leaf.subject_name.clone(),
            (Attribute::Name, PublicDocument::Passport { passport }) => passport.dg1.name.clone(),
            (Attribute::DateOfBirth, PublicDocument::Passport { passport }) => passport.dg1.date_of_birth.clone(),
            (Attribute::Nationality, PublicDocument::Passport { passport }) => passport.dg1.nationality.clone(),
            (Attribute::DateOfBirth | Attribute::Nationality, PublicDocument::Card { .. }) => String::new(),
        }
    }
}

/// The attribute tuple a client discloses for the accumulator check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityAttributes(pub BTreeMap<Attribute, String>);

impl IdentityAttributes {
    pub fn from_document(doc: &PublicDocument, names: &[Attribute]) -> Self {
        IdentityAttributes(names.iter().map(|&a| (a, a.read(doc))).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("attribute serialization cannot fail")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    pub blockchain_id: String,
    pub credential: CredentialParams,
    /// Whether an identity taken offline may register again.
    pub allow_reregistration: bool,
    pub attributes: Vec<Attribute>,
    pub accumulator_seed: u64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig {
            blockchain_id: "zkpoi-main".into(),
            credential: CredentialParams::default(),
            allow_reregistration: false,
            attributes: vec![Attribute::UniqueId, Attribute::Name],
            accumulator_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogOp {
    Register,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub op: LogOp,
    pub pseudonym: String,
    pub pk: PublicKey,
    pub epoch: u64,
}

/// Everything an untrusted host running the ledger can observe.
#[derive(Debug, Clone, Serialize)]
pub struct HostView<'a> {
    pub entries: Vec<&'a RegistryEntry>,
    pub encrypted_ids: &'a BTreeMap<Digest, IdRecord>,
    pub accumulator_root: Digest,
    pub log: &'a [LogRecord],
}

#[derive(Debug)]
pub struct Registry {
    config: RegistryConfig,
    trust_store: TrustStore,
    entries: BTreeMap<Digest, RegistryEntry>,
    ids: EncryptedIdDb,
    accumulator: Accumulator,
    attribute_key: [u8; 32],
    log: Vec<LogRecord>,
}

impl Registry {
    /// `db_key` models the secret shared by attested verifier instances.
    pub fn new(config: RegistryConfig, trust_store: TrustStore, db_key: [u8; 32]) -> Registry {
        let accumulator = Accumulator::generate(config.accumulator_seed);
        let attribute_key = crypto::keyed_tag(&db_key, &[b"attribute-key"]).0;
        Registry {
            config,
            trust_store,
            entries: BTreeMap::new(),
            ids: EncryptedIdDb::new(db_key),
            accumulator,
            attribute_key,
            log: Vec::new(),
        }
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn entry(&self, digest: &Digest) -> Option<&RegistryEntry> {
        self.entries.get(digest)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }

    pub fn online_count(&self) -> usize {
        self.entries.values().filter(|e| e.status == EntryStatus::Online).count()
    }

    pub fn accumulator(&self) -> &Accumulator {
        &self.accumulator
    }

    /// Snapshot version: the number of applied log records.
    pub fn version(&self) -> usize {
        self.log.len()
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn host_view(&self) -> HostView<'_> {
        HostView {
            entries: self.entries.values().collect(),
            encrypted_ids: self.ids.host_view(),
            accumulator_root: self.accumulator.root(),
            log: &self.log,
        }
    }

    fn open_bundle(
        &self,
        session: Option<&AttestationSession>,
        sealed: &[u8],
    ) -> Result<RegistrationBundle, RegistryError> {
        let session = session.filter(|s| s.policy_ok).ok_or(RegistryError::NoSession)?;
        let raw = session.unseal(sealed)?;
        RegistrationBundle::from_bytes(&raw).map_err(|_| RegistryError::Malformed)
    }

    pub fn register(
        &mut self,
        session: Option<&AttestationSession>,
        sealed_bundle: &[u8],
        epoch: u64,
        now: Timestamp,
    ) -> Result<&RegistryEntry, RegistryError> {
        let bundle = self.open_bundle(session, sealed_bundle)?;
        if bundle.pseudonym.suffix != Suffix::Reg {
            return Err(RegistryError::WrongSuffix { expected: Suffix::Reg });
        }
        let verified = verify_registration_bundle(
            &bundle,
            &self.trust_store,
            &self.config.blockchain_id,
            now,
            &self.config.credential,
        )
        .map_err(RegistryError::InvalidBundle)?;

        let reopening = match self.ids.status(&verified.unique_id) {
            None => false,
            Some(IdStatus::Tombstoned) if self.config.allow_reregistration => true,
            Some(_) => return Err(RegistryError::DuplicateIdentity),
        };
        let digest = bundle.pseudonym.digest;
        if !reopening && self.entries.contains_key(&digest) {
            return Err(RegistryError::DuplicateIdentity);
        }

        self.ids.insert(&verified.unique_id);
        self.log.push(LogRecord { op: LogOp::Register, pseudonym: bundle.pseudonym.to_string(), pk: bundle.pk, epoch });
        let entry = RegistryEntry {
            pseudonym: bundle.pseudonym,
            pk: bundle.pk,
            sign_pk: bundle.sign_pk,
            status: EntryStatus::Online,
            registered_at: epoch,
        };
        self.entries.insert(digest, entry);
        Ok(&self.entries[&digest])
    }

    pub fn take_offline(
        &mut self,
        session: Option<&AttestationSession>,
        sealed_bundle: &[u8],
        epoch: u64,
        now: Timestamp,
    ) -> Result<&RegistryEntry, RegistryError> {
        let bundle = self.open_bundle(session, sealed_bundle)?;
        if bundle.pseudonym.suffix == Suffix::Reg {
            return Err(RegistryError::ReplayedRegProof);
        }
        let verified = verify_registration_bundle(
            &bundle,
            &self.trust_store,
            &self.config.blockchain_id,
            now,
            &self.config.credential,
        )
        .map_err(RegistryError::InvalidBundle)?;
        let digest = bundle.pseudonym.digest;
        match self.entries.get(&digest) {
            Some(e) if e.status == EntryStatus::Online => {}
            _ => return Err(RegistryError::UnknownPseudonym),
        }
        if self.ids.status(&verified.unique_id) != Some(IdStatus::Active) {
            return Err(RegistryError::UnknownPseudonym);
        }

        self.ids.tombstone(&verified.unique_id);
        self.log.push(LogRecord { op: LogOp::Offline, pseudonym: bundle.pseudonym.to_string(), pk: bundle.pk, epoch });
        let entry = self.entries.get_mut(&digest).expect("checked above");
        entry.status = EntryStatus::Offline;
        Ok(entry)
    }

    /// Non-membership check of the sealed attribute tuple; on admission the
    /// tuple is accumulated. Elements are keyed hashes so the public root
    /// says nothing about the attributes themselves.
    pub fn check_new_identity_against_accumulator(
        &mut self,
        session: Option<&AttestationSession>,
        sealed_attributes: &[u8],
    ) -> Result<bool, RegistryError> {
        let session = session.filter(|s| s.policy_ok).ok_or(RegistryError::NoSession)?;
        let attributes = session.unseal(sealed_attributes)?;
        let element = crypto::keyed_tag(&self.attribute_key, &[b"attributes", &attributes]);
        let Ok(proof) = self.accumulator.non_membership(element.as_bytes()) else {
            return Ok(false);
        };
        debug_assert!(self.accumulator.verify_non_membership(element.as_bytes(), &proof));
        self.accumulator.add(element.as_bytes()).expect("non-membership just checked");
        Ok(true)
    }

    pub fn export_log(&self) -> String {
        let mut out = String::new();
        for rec in &self.log {
            out.push_str(&serde_json::to_string(rec).expect("log records serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn import_log(jsonl: &str) -> Result<Vec<LogRecord>, RegistryError> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| RegistryError::Log { line: i + 1, reason: e.to_string() }))
        .collect()
}

/// Replays a log into per-pseudonym status, keyed by the REG/OFF-free
/// pseudonym digest in hex.
pub fn replay_log(records: &[LogRecord]) -> BTreeMap<String, EntryStatus> {
    let mut out = BTreeMap::new();
    for rec in records {
        let digest = rec.pseudonym.trim_end_matches("REG").trim_end_matches("OFF").to_string();
        let status = match rec.op {
            LogOp::Register => EntryStatus::Online,
            LogOp::Offline => EntryStatus::Offline,
        };
        out.insert(digest, status);
    }
    out
}
