//! Scenarios over documents, bundles and the ledger.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use zkpoi_core::credential::{
    build_offline_bundle, build_registration_bundle, verify_registration_bundle, AaMode, RegistrationBundle,
};
use zkpoi_core::identity::{Document, PublicDocument};
use zkpoi_core::registry::{import_log, replay_log, EntryStatus};

use crate::mutants::{mutate, Mutation};
use crate::output::{Artifact, Cell, Outputs, Table};
use crate::population::{generate_population, DocKind, Population, PopulationConfig};
use crate::registration::{run_registration, FlowReport, Plan, RegistrationOptions};
use crate::{default_schema_version, scenario_config, CliError, Context};

fn kind_name(kind: DocKind) -> &'static str {
    match kind {
        DocKind::Card => "card",
        DocKind::Passport => "passport",
    }
}

fn read_file(path: &str) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::IoFailure { path: path.into(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub population: PopulationConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig { schema_version: default_schema_version(), seed: None, population: PopulationConfig::default() }
    }
}

impl GenerateConfig {
    fn check(&self) -> Result<(), CliError> {
        self.population.check("population")
    }
}
scenario_config!(GenerateConfig);

#[derive(Serialize)]
struct Sidecar<'a> {
    index: usize,
    kind: DocKind,
    unique_id: &'a str,
    doc_hash: String,
    active_authentication: bool,
    document: PublicDocument,
}

/// Length-prefixed canonical encodings of every card chain, in index order.
fn card_blob(pop: &Population) -> Vec<u8> {
    let mut out = Vec::new();
    for doc in &pop.documents {
        if let Document::Card(card) = doc {
            let bytes = card.chain.to_bytes();
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
    }
    out
}

pub(crate) fn generate(cfg: &GenerateConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let pop = generate_population(&cfg.population, ctx.seed);
    let mut table =
        Table::new("documents", &["index", "kind", "issuer", "unique_id", "doc_hash", "active_authentication"]);
    let mut sidecar = Vec::new();
    for (i, (doc, holder)) in pop.documents.iter().zip(&pop.holders).enumerate() {
        let issuer = match doc {
            Document::Card(c) => c.chain.leaf.issuer_name.clone(),
            Document::Passport(p) => p.dsc.subject_name.clone(),
        };
        let hash = doc.doc_hash().to_hex();
        table.push(vec![
            i.into(),
            kind_name(holder.kind).into(),
            issuer.into(),
            holder.unique_id.as_str().into(),
            hash.clone().into(),
            holder.has_aa.into(),
        ]);
        sidecar.push(Sidecar {
            index: i,
            kind: holder.kind,
            unique_id: &holder.unique_id,
            doc_hash: hash,
            active_authentication: holder.has_aa,
            document: doc.public_part(),
        });
    }
    Ok(Outputs {
        tables: vec![table],
        files: vec![
            Artifact::json("documents.json", &sidecar),
            Artifact { name: "cards.bin".into(), bytes: card_blob(&pop) },
            Artifact { name: "trust_store.bin".into(), bytes: pop.hierarchy.store.to_bytes() },
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub population: PopulationConfig,
    /// Randomized mutants per applicable document kind and mutation.
    pub mutants_per_kind: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            schema_version: default_schema_version(),
            seed: None,
            population: PopulationConfig::default(),
            mutants_per_kind: 20,
        }
    }
}

impl ValidateConfig {
    fn check(&self) -> Result<(), CliError> {
        self.population.check("population")?;
        if self.mutants_per_kind > 0 && self.population.size() == 0 {
            return Err(CliError::invalid("population", "mutants need at least one document"));
        }
        if self.mutants_per_kind > 0 && self.population.intermediates_per_root == 0 && self.population.cards > 0 {
            return Err(CliError::invalid(
                "population.intermediates_per_root",
                "broken-chain mutants need at least one intermediate",
            ));
        }
        Ok(())
    }
}
scenario_config!(ValidateConfig);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixCell {
    pub total: usize,
    pub rejected: usize,
    pub correct_code: usize,
}

/// Validates `per_kind` random mutants for every (mutation, kind) pair that
/// applies. Documents are picked uniformly among those of the kind.
pub fn rejection_matrix(pop: &Population, per_kind: usize, seed: u64) -> BTreeMap<(Mutation, DocKind), MatrixCell> {
    let foreign = generate_population(
        &PopulationConfig { cards: 0, passports: 0, ..PopulationConfig::default() },
        seed ^ 0x5eed_f0e1_9a7e_0001,
    );
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for m in Mutation::ALL {
        for kind in [DocKind::Card, DocKind::Passport] {
            let pool: Vec<usize> = (0..pop.len()).filter(|&i| pop.holders[i].kind == kind).collect();
            if !m.applies_to(kind) || pool.is_empty() {
                continue;
            }
            let mut cell = MatrixCell { total: 0, rejected: 0, correct_code: 0 };
            for _ in 0..per_kind {
                let i = pool[rand::Rng::gen_range(&mut rng, 0..pool.len())];
                let Some(mutant) =
                    mutate(&pop.documents[i], m, &pop.hierarchy.store, &foreign.hierarchy.store, pop.now, &mut rng)
                else {
                    continue;
                };
                let report = mutant.document.validate(&mutant.store, mutant.now);
                cell.total += 1;
                cell.rejected += usize::from(!report.is_accepted());
                cell.correct_code += usize::from(report.failure_code == Some(m.expected()));
            }
            out.insert((m, kind), cell);
        }
    }
    out
}

pub(crate) fn validate(cfg: &ValidateConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let pop = generate_population(&cfg.population, ctx.seed);
    let mut docs = Table::new("validation", &["index", "kind", "verdict", "failure_code"]);
    for (i, (doc, holder)) in pop.documents.iter().zip(&pop.holders).enumerate() {
        let report = doc.validate(&pop.hierarchy.store, pop.now);
        let code = report.failure_code.map(|c| format!("{c:?}")).unwrap_or_default();
        let verdict = if report.is_accepted() { "accepted" } else { "rejected" };
        docs.push(vec![i.into(), kind_name(holder.kind).into(), verdict.into(), code.into()]);
    }
    let mut matrix =
        Table::new("rejection_matrix", &["mutation", "kind", "expected_code", "total", "rejected", "correct_code"]);
    for ((m, kind), cell) in rejection_matrix(&pop, cfg.mutants_per_kind, ctx.seed) {
        matrix.push(vec![
            m.name().into(),
            kind_name(kind).into(),
            format!("{:?}", m.expected()).into(),
            cell.total.into(),
            cell.rejected.into(),
            cell.correct_code.into(),
        ]);
    }
    Ok(Outputs { tables: vec![docs, matrix], files: Vec::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    #[default]
    Reg,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub population: PopulationConfig,
    pub registration: RegistrationOptions,
    /// Holder whose document the bundle is built from.
    pub identity: usize,
    /// Defaults to the holder's generated passphrase.
    pub passphrase: Option<String>,
    pub request: RequestKind,
    /// For `register verify`: a bundle written by `register build`. When
    /// absent the bundle is rebuilt from the other fields.
    pub bundle_path: Option<String>,
}

impl Default for BundleConfig {
    fn default() -> Self {
        BundleConfig {
            schema_version: default_schema_version(),
            seed: None,
            population: PopulationConfig::default(),
            registration: RegistrationOptions::default(),
            identity: 0,
            passphrase: None,
            request: RequestKind::Reg,
            bundle_path: None,
        }
    }
}

impl BundleConfig {
    fn check(&self) -> Result<(), CliError> {
        self.population.check("population")?;
        self.registration.check("registration")?;
        if self.identity >= self.population.size() {
            return Err(CliError::invalid(
                "identity",
                format!("out of range for {} documents", self.population.size()),
            ));
        }
        if self.passphrase.as_deref() == Some("") {
            return Err(CliError::invalid("passphrase", "must not be empty"));
        }
        Ok(())
    }
}
scenario_config!(BundleConfig);

fn build_for(cfg: &BundleConfig, pop: &Population) -> Result<RegistrationBundle, CliError> {
    let i = cfg.identity;
    let holder = &pop.holders[i];
    let passphrase = cfg.passphrase.as_deref().unwrap_or(&holder.passphrase);
    let mode = if holder.has_aa { AaMode::Full } else { AaMode::Absent };
    let build = match cfg.request {
        RequestKind::Reg => build_registration_bundle,
        RequestKind::Off => build_offline_bundle,
    };
    build(
        &pop.documents[i],
        passphrase,
        &cfg.registration.blockchain_id,
        &pop.hierarchy.store,
        pop.now,
        mode,
        &cfg.registration.credential(),
    )
    .map_err(|e| CliError::Runtime(format!("cannot build bundle: {e}")))
}

fn bundle_row(table: &mut Table, b: &RegistrationBundle) {
    let mode = if b.sign_pk.is_some() { "full" } else { "absent" };
    table.push(vec![b.pseudonym.to_string().into(), hex::encode(b.pk.0).into(), mode.into()]);
}

pub(crate) fn build(cfg: &BundleConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let pop = generate_population(&cfg.population, ctx.seed);
    let bundle = build_for(cfg, &pop)?;
    let mut table = Table::new("bundle", &["pseudonym", "pk", "aa_mode"]);
    bundle_row(&mut table, &bundle);
    Ok(Outputs { tables: vec![table], files: vec![Artifact::json("bundle.json", &bundle)] })
}

pub(crate) fn verify(cfg: &BundleConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let pop = generate_population(&cfg.population, ctx.seed);
    let bundle = match &cfg.bundle_path {
        Some(path) => RegistrationBundle::from_bytes(&read_file(path)?)
            .map_err(|e| CliError::invalid("bundle_path", format!("not a bundle: {e}")))?,
        None => build_for(cfg, &pop)?,
    };
    let result = verify_registration_bundle(
        &bundle,
        &pop.hierarchy.store,
        &cfg.registration.blockchain_id,
        pop.now,
        &cfg.registration.credential(),
    );
    let mut table = Table::new("verification", &["pseudonym", "accepted", "failed_step", "reason"]);
    let (accepted, step, reason) = match &result {
        Ok(_) => (true, 0u64, String::new()),
        Err(r) => (false, u64::from(r.step()), format!("{r:?}")),
    };
    table.push(vec![bundle.pseudonym.to_string().into(), accepted.into(), step.into(), reason.into()]);
    Ok(Outputs { tables: vec![table], files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub population: PopulationConfig,
    pub registration: RegistrationOptions,
    /// Try a fresh passphrase, a renewed document and a replayed proof for
    /// every identity. Only `register run` honours it.
    pub duplicates: bool,
    /// Identities taken offline after registration. Ignored by
    /// `registry register`.
    pub offline: Vec<usize>,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            schema_version: default_schema_version(),
            seed: None,
            population: PopulationConfig::default(),
            registration: RegistrationOptions::default(),
            duplicates: true,
            offline: vec![0, 1],
        }
    }
}

impl RegistrationConfig {
    fn check(&self) -> Result<(), CliError> {
        self.population.check("population")?;
        self.registration.check("registration")?;
        if let Some((pos, i)) = self.offline.iter().enumerate().find(|(_, &i)| i >= self.population.size()) {
            return Err(CliError::invalid(&format!("offline[{pos}]"), format!("identity {i} is out of range")));
        }
        Ok(())
    }
}
scenario_config!(RegistrationConfig);

fn flow_outputs(report: &FlowReport, with_attempts: bool) -> Outputs {
    let mut tables = Vec::new();
    if with_attempts {
        let mut rows = Table::new("registrations", &["identity", "attempt", "accepted", "outcome", "pseudonym"]);
        let mut summary: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for r in &report.records {
            rows.push(vec![
                r.identity.into(),
                r.attempt.name().into(),
                r.accepted.into(),
                r.outcome.as_str().into(),
                r.pseudonym.clone().unwrap_or_default().into(),
            ]);
            let e = summary.entry(r.attempt.name()).or_default();
            e.0 += 1;
            e.1 += usize::from(r.accepted);
        }
        let mut sum = Table::new("summary", &["attempt", "total", "accepted", "rejected"]);
        for (name, (total, accepted)) in summary {
            sum.push(vec![name.into(), total.into(), accepted.into(), (total - accepted).into()]);
        }
        tables.push(rows);
        tables.push(sum);
    }
    let mut entries = Table::new("entries", &["pseudonym", "status", "registered_at"]);
    for e in report.registry.entries() {
        let status = match e.status {
            EntryStatus::Online => "online",
            EntryStatus::Offline => "offline",
        };
        entries.push(vec![e.pseudonym.to_string().into(), status.into(), e.registered_at.into()]);
    }
    tables.push(entries);
    Outputs {
        tables,
        files: vec![
            Artifact { name: "registry_log.jsonl".into(), bytes: report.registry.export_log().into_bytes() },
            Artifact::json("host_view.json", &report.registry.host_view()),
        ],
    }
}

pub(crate) fn register_run(cfg: &RegistrationConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let mut pop = generate_population(&cfg.population, ctx.seed);
    let plan = Plan { duplicates: cfg.duplicates, offline: cfg.offline.clone() };
    let report = run_registration(&mut pop, &cfg.registration, &plan, ctx.seed)?;
    Ok(flow_outputs(&report, true))
}

pub(crate) fn registry_register(cfg: &RegistrationConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let mut pop = generate_population(&cfg.population, ctx.seed);
    let report = run_registration(&mut pop, &cfg.registration, &Plan::default(), ctx.seed)?;
    Ok(flow_outputs(&report, false))
}

pub(crate) fn registry_offline(cfg: &RegistrationConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let mut pop = generate_population(&cfg.population, ctx.seed);
    let plan = Plan { duplicates: false, offline: cfg.offline.clone() };
    let report = run_registration(&mut pop, &cfg.registration, &plan, ctx.seed)?;
    Ok(flow_outputs(&report, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Line-delimited log written by a registry scenario.
    pub log_path: String,
}

impl Default for DumpConfig {
    fn default() -> Self {
        DumpConfig { schema_version: default_schema_version(), seed: None, log_path: "registry_log.jsonl".into() }
    }
}

impl DumpConfig {
    fn check(&self) -> Result<(), CliError> {
        if self.log_path.is_empty() {
            return Err(CliError::invalid("log_path", "must not be empty"));
        }
        Ok(())
    }
}
scenario_config!(DumpConfig);

pub(crate) fn dump(cfg: &DumpConfig, _ctx: &Context) -> Result<Outputs, CliError> {
    let raw = read_file(&cfg.log_path)?;
    let text = String::from_utf8(raw).map_err(|_| CliError::invalid("log_path", "log is not UTF-8"))?;
    let records = import_log(&text).map_err(|e| CliError::invalid("log_path", e))?;
    let mut table = Table::new("status", &["pseudonym", "status"]);
    for (digest, status) in replay_log(&records) {
        let status = match status {
            EntryStatus::Online => "online",
            EntryStatus::Offline => "offline",
        };
        table.push(vec![Cell::from(digest), status.into()]);
    }
    Ok(Outputs { tables: vec![table], files: Vec::new() })
}
