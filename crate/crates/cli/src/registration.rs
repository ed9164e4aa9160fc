//! End-to-end registration flows against a simulated ledger: admission,
//! duplicate attempts, removal-proof replay and going offline.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use zkpoi_core::attestation::{mutual_attest, AttestationPolicy, AttestationSession, EnclaveIdentity};
use zkpoi_core::credential::{
    build_offline_bundle, build_registration_bundle, AaMode, CredentialParams, KdfParams, RegistrationBundle,
};
use zkpoi_core::hash::Digest;
use zkpoi_core::identity::Document;
use zkpoi_core::registry::{IdentityAttributes, Registry, RegistryConfig, RegistryError};

use crate::population::Population;
use crate::CliError;

const CLIENT_CODE: &str = "zkpoi-client";
const VERIFIER_CODE: &str = "zkpoi-verifier";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationOptions {
    pub blockchain_id: String,
    pub kdf_iterations: u32,
    /// Iterations for documents that cannot sign.
    pub aa_less_kdf_iterations: u32,
    pub allow_reregistration: bool,
}

impl Default for RegistrationOptions {
    fn default() -> Self {
        RegistrationOptions {
            blockchain_id: "zkpoi-main".into(),
            kdf_iterations: 1_000,
            aa_less_kdf_iterations: 4_000,
            allow_reregistration: false,
        }
    }
}

impl RegistrationOptions {
    pub fn check(&self, path: &str) -> Result<(), CliError> {
        if self.kdf_iterations == 0 {
            return Err(CliError::invalid(&format!("{path}.kdf_iterations"), "must be at least 1"));
        }
        if self.aa_less_kdf_iterations == 0 {
            return Err(CliError::invalid(&format!("{path}.aa_less_kdf_iterations"), "must be at least 1"));
        }
        if self.blockchain_id.is_empty() {
            return Err(CliError::invalid(&format!("{path}.blockchain_id"), "must not be empty"));
        }
        Ok(())
    }

    pub fn credential(&self) -> CredentialParams {
        CredentialParams {
            kdf: KdfParams { iterations: self.kdf_iterations, output_len: 32 },
            aa_less_kdf: KdfParams { iterations: self.aa_less_kdf_iterations, output_len: 32 },
            ..CredentialParams::default()
        }
    }

    pub fn registry_config(&self, seed: u64) -> RegistryConfig {
        RegistryConfig {
            blockchain_id: self.blockchain_id.clone(),
            credential: self.credential(),
            allow_reregistration: self.allow_reregistration,
            accumulator_seed: seed,
            ..RegistryConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attempt {
    /// First registration of a document.
    Register,
    /// Same document, different passphrase.
    FreshPassphrase,
    /// Accumulator check for a renewed document.
    RenewalAccumulator,
    /// Registration bundle built from a renewed document.
    RenewalRegister,
    /// The registration bundle submitted as a removal request.
    ReplayAsRemoval,
    Offline,
}

impl Attempt {
    pub fn name(self) -> &'static str {
        match self {
            Attempt::Register => "register",
            Attempt::FreshPassphrase => "fresh-passphrase",
            Attempt::RenewalAccumulator => "renewal-accumulator",
            Attempt::RenewalRegister => "renewal-register",
            Attempt::ReplayAsRemoval => "replay-as-removal",
            Attempt::Offline => "offline",
        }
    }

    /// Whether a correct ledger admits this attempt.
    pub fn should_succeed(self) -> bool {
        matches!(self, Attempt::Register | Attempt::Offline)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptRecord {
    pub identity: usize,
    pub attempt: Attempt,
    pub accepted: bool,
    pub outcome: String,
    pub pseudonym: Option<String>,
}

/// Which steps to run besides plain registration.
#[derive(Debug, Clone, Default)]
pub struct Plan {
    pub duplicates: bool,
    pub offline: Vec<usize>,
}

pub struct FlowReport {
    pub records: Vec<AttemptRecord>,
    pub registry: Registry,
    /// Pseudonym digests of the registered identities, by identity index.
    pub pseudonyms: Vec<Option<Digest>>,
}

fn error_code(e: &RegistryError) -> String {
    match e {
        RegistryError::NoSession => "no-session".into(),
        RegistryError::Attestation(_) => "attestation".into(),
        RegistryError::Malformed => "malformed".into(),
        RegistryError::InvalidBundle(r) => format!("invalid-bundle-step-{}", r.step()),
        RegistryError::DuplicateIdentity => "duplicate-identity".into(),
        RegistryError::WrongSuffix { .. } => "wrong-suffix".into(),
        RegistryError::ReplayedRegProof => "replayed-reg-proof".into(),
        RegistryError::UnknownPseudonym => "unknown-pseudonym".into(),
        RegistryError::Log { .. } => "log".into(),
    }
}

struct Ledger<'a> {
    registry: Registry,
    pop: &'a Population,
    opts: &'a RegistrationOptions,
    rng: ChaCha20Rng,
    policy: AttestationPolicy,
}

impl Ledger<'_> {
    fn session(&mut self) -> AttestationSession {
        let client = EnclaveIdentity::new(CLIENT_CODE, 1);
        let server = EnclaveIdentity::new(VERIFIER_CODE, 1);
        mutual_attest(client, server, &self.policy, &mut self.rng).expect("pinned identities match the policy")
    }

    fn bundle(&self, doc: &Document, i: usize, passphrase: &str, off: bool) -> Result<RegistrationBundle, CliError> {
        let mode = if self.pop.holders[i].has_aa { AaMode::Full } else { AaMode::Absent };
        let build = if off { build_offline_bundle } else { build_registration_bundle };
        build(
            doc,
            passphrase,
            &self.opts.blockchain_id,
            &self.pop.hierarchy.store,
            self.pop.now,
            mode,
            &self.registry.config().credential,
        )
        .map_err(|e| CliError::Runtime(format!("identity {i}: cannot build bundle: {e}")))
    }

    fn admit(&mut self, doc: &Document) -> bool {
        let attrs = IdentityAttributes::from_document(&doc.public_part(), &self.registry.config().attributes);
        let mut s = self.session();
        let sealed = s.seal(&attrs.to_bytes());
        self.registry.check_new_identity_against_accumulator(Some(&s), &sealed).expect("session is attested")
    }

    fn submit(&mut self, bundle: &RegistrationBundle, off: bool, epoch: u64) -> Result<(), RegistryError> {
        let mut s = self.session();
        let sealed = s.seal(&bundle.to_bytes());
        let now = self.pop.now;
        if off {
            self.registry.take_offline(Some(&s), &sealed, epoch, now).map(|_| ())
        } else {
            self.registry.register(Some(&s), &sealed, epoch, now).map(|_| ())
        }
    }
}

fn record(identity: usize, attempt: Attempt, result: Result<(), String>, pseudonym: Option<String>) -> AttemptRecord {
    let (accepted, outcome) = match result {
        Ok(()) => (true, "accepted".to_string()),
        Err(code) => (false, code),
    };
    AttemptRecord { identity, attempt, accepted, outcome, pseudonym }
}

/// Runs every identity in `pop` through the ledger in index order. Renewed
/// documents are drawn from `pop`, which is why it is borrowed mutably.
pub fn run_registration(
    pop: &mut Population,
    opts: &RegistrationOptions,
    plan: &Plan,
    seed: u64,
) -> Result<FlowReport, CliError> {
    let renewals: Vec<Option<Document>> = (0..pop.len()).map(|i| plan.duplicates.then(|| pop.renew(i))).collect();
    let pop: &Population = pop;
    let client = EnclaveIdentity::new(CLIENT_CODE, 1);
    let server = EnclaveIdentity::new(VERIFIER_CODE, 1);
    let db_key = Digest::framed(&[b"db-key", &seed.to_be_bytes()]).0;
    let mut ledger = Ledger {
        registry: Registry::new(opts.registry_config(seed), pop.hierarchy.store.clone(), db_key),
        pop,
        opts,
        rng: ChaCha20Rng::from_seed(Digest::framed(&[b"sessions", &seed.to_be_bytes()]).0),
        policy: AttestationPolicy::pinned(client, server),
    };
    let mut records = Vec::new();
    let mut pseudonyms = vec![None; pop.len()];

    for i in 0..pop.len() {
        let doc = &pop.documents[i];
        let passphrase = pop.holders[i].passphrase.clone();
        let epoch = i as u64;
        let reg = ledger.bundle(doc, i, &passphrase, false)?;
        let name = Some(reg.pseudonym.to_string());
        let result = if ledger.admit(doc) {
            ledger.submit(&reg, false, epoch).map_err(|e| error_code(&e))
        } else {
            Err("accumulator-hit".into())
        };
        if result.is_ok() {
            pseudonyms[i] = Some(reg.pseudonym.digest);
        }
        records.push(record(i, Attempt::Register, result, name));

        if plan.duplicates {
            let fresh = ledger.bundle(doc, i, &format!("fresh-{passphrase}"), false)?;
            let result = ledger.submit(&fresh, false, epoch).map_err(|e| error_code(&e));
            records.push(record(i, Attempt::FreshPassphrase, result, Some(fresh.pseudonym.to_string())));

            let renewed = renewals[i].as_ref().expect("issued above");
            let admitted = ledger.admit(renewed);
            let result = if admitted { Ok(()) } else { Err("accumulator-hit".to_string()) };
            records.push(record(i, Attempt::RenewalAccumulator, result, None));

            let rb = ledger.bundle(renewed, i, &passphrase, false)?;
            let result = ledger.submit(&rb, false, epoch).map_err(|e| error_code(&e));
            records.push(record(i, Attempt::RenewalRegister, result, Some(rb.pseudonym.to_string())));

            let result = ledger.submit(&reg, true, epoch).map_err(|e| error_code(&e));
            records.push(record(i, Attempt::ReplayAsRemoval, result, Some(reg.pseudonym.to_string())));
        }
    }

    for &i in &plan.offline {
        if i >= pop.len() {
            return Err(CliError::invalid("offline", format!("identity {i} is out of range")));
        }
        let doc = &pop.documents[i];
        let passphrase = pop.holders[i].passphrase.clone();
        let off = ledger.bundle(doc, i, &passphrase, true)?;
        let result = ledger.submit(&off, true, pop.len() as u64).map_err(|e| error_code(&e));
        records.push(record(i, Attempt::Offline, result, Some(off.pseudonym.to_string())));
    }

    Ok(FlowReport { records, registry: ledger.registry, pseudonyms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{generate_population, PopulationConfig};

    fn fast() -> RegistrationOptions {
        RegistrationOptions { kdf_iterations: 4, aa_less_kdf_iterations: 8, ..RegistrationOptions::default() }
    }

    #[test]
    fn every_duplicate_is_rejected() {
        let cfg = PopulationConfig { cards: 4, passports: 4, ..PopulationConfig::default() };
        let mut pop = generate_population(&cfg, 2);
        let plan = Plan { duplicates: true, offline: vec![1, 5] };
        let report = run_registration(&mut pop, &fast(), &plan, 2).unwrap();
        for r in &report.records {
            assert_eq!(r.accepted, r.attempt.should_succeed(), "{r:?}");
        }
        let outcome = |a: Attempt| report.records.iter().find(|r| r.attempt == a).unwrap().outcome.clone();
        assert_eq!(outcome(Attempt::FreshPassphrase), "duplicate-identity");
        assert_eq!(outcome(Attempt::RenewalAccumulator), "accumulator-hit");
        assert_eq!(outcome(Attempt::RenewalRegister), "duplicate-identity");
        assert_eq!(outcome(Attempt::ReplayAsRemoval), "replayed-reg-proof");
        assert_eq!(report.registry.online_count(), 6);
        assert!(report.pseudonyms.iter().all(Option::is_some));
    }
}
