//! Experiment runner: parses a scenario config, runs it with a fixed seed,
//! and renders tables plus a manifest of output checksums.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod econ;
pub mod identity;
pub mod mutants;
pub mod output;
pub mod population;
pub mod registration;
pub mod sim;

use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use output::{Artifact, Format, Outputs, RunManifest, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },
    #[error("cannot access {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn invalid(path: &str, message: impl std::fmt::Display) -> CliError {
        CliError::ConfigInvalid { path: path.into(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    IdentityGen,
    IdentityValidate,
    RegisterBuild,
    RegisterVerify,
    RegisterRun,
    RegistryRegister,
    RegistryOffline,
    RegistryDump,
    SimEpoch,
    SimThresholds,
    SimSecurity,
    SimDecentralization,
    SimPipeline,
    EconCongestion,
    EconPoa,
    EconDominance,
    EconEss,
    EconNetwork,
    EconCirculation,
}

const SCENARIOS: &[(&str, &str, Scenario)] = &[
    ("identity", "gen", Scenario::IdentityGen),
    ("identity", "validate", Scenario::IdentityValidate),
    ("register", "build", Scenario::RegisterBuild),
    ("register", "verify", Scenario::RegisterVerify),
    ("register", "run", Scenario::RegisterRun),
    ("registry", "register", Scenario::RegistryRegister),
    ("registry", "offline", Scenario::RegistryOffline),
    ("registry", "dump", Scenario::RegistryDump),
    ("sim", "epoch", Scenario::SimEpoch),
    ("sim", "thresholds", Scenario::SimThresholds),
    ("sim", "security", Scenario::SimSecurity),
    ("sim", "decentralization", Scenario::SimDecentralization),
    ("sim", "pipeline", Scenario::SimPipeline),
    ("econ", "congestion", Scenario::EconCongestion),
    ("econ", "poa", Scenario::EconPoa),
    ("econ", "dominance", Scenario::EconDominance),
    ("econ", "ess", Scenario::EconEss),
    ("econ", "network", Scenario::EconNetwork),
    ("econ", "circulation", Scenario::EconCirculation),
];

impl Scenario {
    pub fn parse(area: &str, verb: &str) -> Result<Scenario, CliError> {
        SCENARIOS.iter().find(|(a, v, _)| *a == area && *v == verb).map(|(_, _, s)| *s).ok_or_else(|| {
            let known: Vec<&str> = SCENARIOS.iter().filter(|(a, _, _)| *a == area).map(|(_, v, _)| *v).collect();
            CliError::invalid("verb", format!("unknown verb `{verb}` for `{area}`; expected one of {known:?}"))
        })
    }

    pub fn all() -> impl Iterator<Item = Scenario> {
        SCENARIOS.iter().map(|(_, _, s)| *s)
    }

    pub fn name(self) -> String {
        let (a, v, _) = SCENARIOS.iter().find(|(_, _, s)| *s == self).expect("every scenario is listed");
        format!("{a} {v}")
    }
}

/// One invocation of the runner.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub scenario: Scenario,
    /// Raw JSON config; `None` runs with defaults.
    pub config: Option<String>,
    pub seed: Option<u64>,
    /// Value of the seed override variable, if set.
    pub env_seed: Option<String>,
    pub format: Format,
    pub jobs: usize,
    /// Top-level config fields set from the command line.
    pub overrides: Vec<(String, serde_json::Value)>,
}

impl Invocation {
    pub fn new(scenario: Scenario) -> Invocation {
        Invocation {
            scenario,
            config: None,
            seed: None,
            env_seed: None,
            format: Format::Csv,
            jobs: 1,
            overrides: Vec::new(),
        }
    }
}

pub const SEED_ENV: &str = "ZKPOI_SEED";

#[derive(Debug)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub artifacts: Vec<Artifact>,
}

/// Fields every config carries.
pub(crate) trait ScenarioConfig: DeserializeOwned + Serialize + Default {
    fn schema_version(&self) -> u32;
    fn seed(&self) -> Option<u64>;
    /// Semantic checks after parsing.
    fn validate(&self) -> Result<(), CliError> {
        Ok(())
    }
}

pub(crate) fn parse_config<T: ScenarioConfig>(
    text: Option<&str>,
    overrides: &[(String, serde_json::Value)],
) -> Result<T, CliError> {
    let mut value = match text {
        None => serde_json::to_value(T::default()).expect("configs serialize"),
        Some(text) => serde_json::from_str(text).map_err(|e| CliError::invalid("<root>", e))?,
    };
    for (key, v) in overrides {
        let obj = value.as_object_mut().ok_or_else(|| CliError::invalid("<root>", "config must be a JSON object"))?;
        obj.insert(key.clone(), v.clone());
    }
    let config: T = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::invalid(&path, e.into_inner())
    })?;
    if config.schema_version() != output::SCHEMA_VERSION {
        return Err(CliError::invalid(
            "schema_version",
            format!("unsupported version {}, expected {}", config.schema_version(), output::SCHEMA_VERSION),
        ));
    }
    config.validate()?;
    Ok(config)
}

fn resolve_seed(inv: &Invocation, config_seed: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = inv.seed {
        return Ok(seed);
    }
    if let Some(raw) = &inv.env_seed {
        return u64::from_str(raw.trim()).map_err(|e| CliError::invalid(SEED_ENV, e));
    }
    Ok(config_seed.unwrap_or(0))
}

pub(crate) struct Context {
    pub seed: u64,
    pub jobs: usize,
}

fn execute<T: ScenarioConfig>(
    inv: &Invocation,
    body: impl FnOnce(&T, &Context) -> Result<Outputs, CliError>,
) -> Result<RunOutput, CliError> {
    let config: T = parse_config(inv.config.as_deref(), &inv.overrides)?;
    let seed = resolve_seed(inv, config.seed())?;
    let ctx = Context { seed, jobs: inv.jobs.max(1) };
    let outputs = body(&config, &ctx)?;
    let artifacts = outputs.render(inv.format);
    let config_hash = output::sha256_hex(&serde_json::to_vec(&config).expect("configs serialize"));
    let manifest = RunManifest::new(&inv.scenario.name(), config_hash, seed, &artifacts);
    Ok(RunOutput { manifest, artifacts })
}

pub fn run(inv: &Invocation) -> Result<RunOutput, CliError> {
    match inv.scenario {
        Scenario::IdentityGen => execute(inv, identity::generate),
        Scenario::IdentityValidate => execute(inv, identity::validate),
        Scenario::RegisterBuild => execute(inv, identity::build),
        Scenario::RegisterVerify => execute(inv, identity::verify),
        Scenario::RegisterRun => execute(inv, identity::register_run),
        Scenario::RegistryRegister => execute(inv, identity::registry_register),
        Scenario::RegistryOffline => execute(inv, identity::registry_offline),
        Scenario::RegistryDump => execute(inv, identity::dump),
        Scenario::SimEpoch => execute(inv, sim::epoch),
        Scenario::SimThresholds => execute(inv, sim::thresholds),
        Scenario::SimSecurity => execute(inv, sim::security),
        Scenario::SimDecentralization => execute(inv, sim::decentralization),
        Scenario::SimPipeline => execute(inv, sim::pipeline),
        Scenario::EconCongestion => execute(inv, econ::congestion),
        Scenario::EconPoa => execute(inv, econ::poa),
        Scenario::EconDominance => execute(inv, econ::dominance),
        Scenario::EconEss => execute(inv, econ::ess),
        Scenario::EconNetwork => execute(inv, econ::network),
        Scenario::EconCirculation => execute(inv, econ::circulation),
    }
}

/// Maps `f` over `items` on up to `jobs` threads, preserving order.
pub(crate) fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

macro_rules! scenario_config {
    ($t:ty) => {
        impl $crate::ScenarioConfig for $t {
            fn schema_version(&self) -> u32 {
                self.schema_version
            }
            fn seed(&self) -> Option<u64> {
                self.seed
            }
            fn validate(&self) -> Result<(), $crate::CliError> {
                self.check()
            }
        }
    };
}
pub(crate) use scenario_config;

pub(crate) fn default_schema_version() -> u32 {
    output::SCHEMA_VERSION
}
