//! Shard-game scenarios: epoch simulation, thresholds, security bounds,
//! decentralization and the registration-to-epoch pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use zkpoi_core::credential::derive_keypair;
use zkpoi_core::hash::Digest;
use zkpoi_core::shardgame::{
    cooperation_thresholds, decentralization_check, epoch_failure_bound, make_population, payoff_cooperate,
    payoff_defect, run_coordinated_protocol, run_receipt_protocol, shard_failure_monte_carlo, shard_failure_prob,
    Behavior, Class, EpochOutcome, GameParams, GossipTopology, Miner,
};

use crate::output::{Artifact, Outputs, Table};
use crate::population::{generate_population, PopulationConfig};
use crate::registration::{run_registration, Plan, RegistrationOptions};
use crate::{default_schema_version, par_map, scenario_config, CliError, Context};

fn default_params() -> GameParams {
    GameParams { k: 2, n: 12, c: 3, tau: 2, r: 1.0, br: 100.0, c_f: 2.0, c_v: 0.1, p: 1.0, txs_per_shard: 20 }
}

fn check_params(params: &GameParams, path: &str) -> Result<(), CliError> {
    params.validate().map_err(|e| CliError::invalid(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// A coordinator collects list hashes.
    #[default]
    Coordinated,
    /// Miners prove participation with signed gossip receipts.
    Receipts,
}

/// Miner counts per behavior.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorMix {
    pub honest: usize,
    pub lazy_defector: usize,
    pub false_hash_reporter: usize,
    pub instruction_ignorer: usize,
}

impl BehaviorMix {
    pub fn total(&self) -> usize {
        self.honest + self.lazy_defector + self.false_hash_reporter + self.instruction_ignorer
    }

    /// Behaviors in a fixed order; shard assignment shuffles them anyway.
    pub fn expand(&self) -> Vec<Behavior> {
        let mut out = vec![Behavior::Honest; self.honest];
        out.extend(std::iter::repeat_n(Behavior::LazyDefector, self.lazy_defector));
        out.extend(std::iter::repeat_n(Behavior::FalseHashReporter, self.false_hash_reporter));
        out.extend(std::iter::repeat_n(Behavior::InstructionIgnorer, self.instruction_ignorer));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpochConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub params: GameParams,
    pub behaviors: BehaviorMix,
    pub protocol: Protocol,
    pub topology: GossipTopology,
    pub receipt_sample_size: usize,
    pub epochs: usize,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            schema_version: default_schema_version(),
            seed: None,
            params: default_params(),
            behaviors: BehaviorMix { honest: 10, lazy_defector: 2, ..BehaviorMix::default() },
            protocol: Protocol::Coordinated,
            topology: GossipTopology::Ring,
            receipt_sample_size: 3,
            epochs: 4,
        }
    }
}

impl EpochConfig {
    fn check(&self) -> Result<(), CliError> {
        check_params(&self.params, "params")?;
        if self.behaviors.total() != self.params.n {
            return Err(CliError::invalid(
                "behaviors",
                format!("{} miners listed but params.n is {}", self.behaviors.total(), self.params.n),
            ));
        }
        if self.epochs == 0 {
            return Err(CliError::invalid("epochs", "must be at least 1"));
        }
        Ok(())
    }
}
scenario_config!(EpochConfig);

/// Randomness for epoch `e` of a run.
pub fn epoch_randomness(seed: u64, epoch: usize) -> Digest {
    Digest::framed(&[b"epoch", &seed.to_be_bytes(), &(epoch as u64).to_be_bytes()])
}

pub struct EpochSettings<'a> {
    pub params: &'a GameParams,
    pub protocol: Protocol,
    pub topology: GossipTopology,
    pub receipt_sample_size: usize,
}

pub fn run_epoch(s: &EpochSettings<'_>, miners: &[Miner], randomness: &Digest) -> EpochOutcome {
    match s.protocol {
        Protocol::Coordinated => run_coordinated_protocol(s.params, miners, randomness),
        Protocol::Receipts => run_receipt_protocol(s.params, miners, randomness, s.topology, s.receipt_sample_size),
    }
}

fn behavior_name(b: Behavior) -> &'static str {
    match b {
        Behavior::Honest => "honest",
        Behavior::LazyDefector => "lazy-defector",
        Behavior::FalseHashReporter => "false-hash-reporter",
        Behavior::InstructionIgnorer => "instruction-ignorer",
    }
}

#[derive(Serialize)]
struct EpochSummary {
    epoch: usize,
    total_reward: f64,
    cooperators: usize,
    defectors: usize,
    detected: usize,
    failed_shards: usize,
}

fn epoch_outputs(s: &EpochSettings<'_>, miners: &[Miner], epochs: usize, seed: u64, jobs: usize) -> Outputs {
    let indices: Vec<usize> = (0..epochs).collect();
    let outcomes = par_map(jobs, &indices, |&e| run_epoch(s, miners, &epoch_randomness(seed, e)));
    let mut rows = Table::new("epochs", &["epoch", "miner", "behavior", "shard", "class", "payoff", "detected"]);
    let mut shards =
        Table::new("shards", &["epoch", "shard", "agreed_txs", "cooperators", "defectors", "all_defective"]);
    let mut summary = Vec::new();
    for (e, out) in outcomes.iter().enumerate() {
        for m in &out.miners {
            let class = match m.class {
                Class::Cooperator => "cooperator",
                Class::Defector => "defector",
            };
            rows.push(vec![
                e.into(),
                m.id.into(),
                behavior_name(miners[m.id].behavior).into(),
                m.shard.into(),
                class.into(),
                m.payoff.into(),
                m.detected.into(),
            ]);
        }
        for sh in &out.shards {
            shards.push(vec![
                e.into(),
                sh.shard.into(),
                sh.y.len().into(),
                sh.cooperators.len().into(),
                sh.defectors.len().into(),
                sh.all_defective.into(),
            ]);
        }
        let cooperators = out.miners.iter().filter(|m| m.class == Class::Cooperator).count();
        summary.push(EpochSummary {
            epoch: e,
            total_reward: out.total_reward,
            cooperators,
            defectors: out.miners.len() - cooperators,
            detected: out.miners.iter().filter(|m| m.detected).count(),
            failed_shards: out.shards.iter().filter(|s| s.all_defective).count(),
        });
    }
    Outputs { tables: vec![rows, shards], files: vec![Artifact::json("summary.json", &summary)] }
}

pub(crate) fn epoch(cfg: &EpochConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let miners = make_population(&cfg.behaviors.expand(), ctx.seed);
    let settings = EpochSettings {
        params: &cfg.params,
        protocol: cfg.protocol,
        topology: cfg.topology,
        receipt_sample_size: cfg.receipt_sample_size,
    };
    Ok(epoch_outputs(&settings, &miners, cfg.epochs, ctx.seed, ctx.jobs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub params: GameParams,
    /// Cooperators in the shard.
    pub l: usize,
    /// Size of the agreed list.
    pub y_len: usize,
    /// Largest list size tabulated.
    pub x_max: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            schema_version: default_schema_version(),
            seed: None,
            params: default_params(),
            l: 5,
            y_len: 20,
            x_max: 50,
        }
    }
}

impl ThresholdConfig {
    fn check(&self) -> Result<(), CliError> {
        check_params(&self.params, "params")?;
        if self.l == 0 {
            return Err(CliError::invalid("l", "must be at least 1"));
        }
        Ok(())
    }
}
scenario_config!(ThresholdConfig);

pub(crate) fn thresholds(cfg: &ThresholdConfig, _ctx: &Context) -> Result<Outputs, CliError> {
    let p = &cfg.params;
    let t = cooperation_thresholds(p, cfg.l, cfg.y_len).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut summary = Table::new("thresholds", &["variant", "theta1", "theta2", "theta1_slope"]);
    summary.push(vec!["direct".into(), t.theta1_direct.into(), t.theta2_direct.into(), t.theta1_slope.into()]);
    summary.push(vec!["reversed".into(), t.theta1_reversed.into(), t.theta2_reversed.into(), t.theta1_slope.into()]);
    let mut table = Table::new(
        "best_response",
        &[
            "x",
            "payoff_agreed",
            "payoff_other",
            "payoff_defect",
            "cooperate_agreed",
            "cooperate_other",
            "rule_agreed",
            "rule_other",
        ],
    );
    let err = |e: zkpoi_core::shardgame::ShardGameError| CliError::Runtime(e.to_string());
    for x in 0..=cfg.x_max {
        let agreed = payoff_cooperate(p, cfg.l, x, x).map_err(err)?;
        let other = payoff_cooperate(p, cfg.l, cfg.y_len, x).map_err(err)?;
        let defect = payoff_defect(p);
        table.push(vec![
            x.into(),
            agreed.into(),
            other.into(),
            defect.into(),
            (agreed >= defect).into(),
            (other >= defect).into(),
            t.cooperates_on_agreed_list(x).into(),
            t.cooperates_on_other_list(x).into(),
        ]);
    }
    Ok(Outputs { tables: vec![summary, table], files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecurityConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub shard_sizes: Vec<u64>,
    /// Adversarial fractions of the population.
    pub fractions: Vec<f64>,
    pub draws: u64,
    pub shards: u64,
    pub views: Vec<u32>,
}

impl Default for SecurityConfig {
    fn default() -> Self {
        SecurityConfig {
            schema_version: default_schema_version(),
            seed: None,
            shard_sizes: vec![3, 9, 30],
            fractions: vec![0.05, 0.1, 0.5],
            draws: 100_000,
            shards: 10,
            views: vec![1, 2, 5, 10, 100],
        }
    }
}

impl SecurityConfig {
    fn check(&self) -> Result<(), CliError> {
        if let Some(i) = self.shard_sizes.iter().position(|&n| n == 0) {
            return Err(CliError::invalid(&format!("shard_sizes[{i}]"), "must be positive"));
        }
        if let Some(i) = self.fractions.iter().position(|m| !(0.0..=1.0).contains(m)) {
            return Err(CliError::invalid(&format!("fractions[{i}]"), "must lie in [0, 1]"));
        }
        if self.draws < 2 {
            return Err(CliError::invalid("draws", "need at least two draws"));
        }
        if let Some(i) = self.views.iter().position(|&v| v == 0) {
            return Err(CliError::invalid(&format!("views[{i}]"), "must be positive"));
        }
        Ok(())
    }
}
scenario_config!(SecurityConfig);

pub(crate) fn security(cfg: &SecurityConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let cases: Vec<(usize, u64, f64)> = cfg
        .shard_sizes
        .iter()
        .flat_map(|&n| cfg.fractions.iter().map(move |&m| (n, m)))
        .enumerate()
        .map(|(i, (n, m))| (i, n, m))
        .collect();
    let rows = par_map(ctx.jobs, &cases, |&(i, n, m)| {
        let exact = shard_failure_prob(n, m);
        let (mc, se) = shard_failure_monte_carlo(n, m, cfg.draws, ctx.seed.wrapping_add(i as u64));
        (n, m, exact, mc, se)
    });
    let mut failure = Table::new("shard_failure", &["n", "m", "exact", "monte_carlo", "std_error", "z_score"]);
    let mut bounds = Table::new("epoch_bound", &["n", "m", "shards", "views", "finite", "limit"]);
    for (n, m, exact, mc, se) in rows {
        let z = if se > 0.0 { (mc - exact) / se } else { 0.0 };
        failure.push(vec![n.into(), m.into(), exact.into(), mc.into(), se.into(), z.into()]);
        for &v in &cfg.views {
            let b = epoch_failure_bound(cfg.shards, exact, v);
            bounds.push(vec![
                n.into(),
                m.into(),
                cfg.shards.into(),
                u64::from(v).into(),
                b.finite.into(),
                b.limit.into(),
            ]);
        }
    }
    Ok(Outputs { tables: vec![failure, bounds], files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecentralizationConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    /// Power of every node, grouped by controlling player.
    pub players: BTreeMap<String, Vec<f64>>,
    pub m: usize,
    pub epsilon: f64,
    /// Percentile in `[0, 100]`.
    pub delta: f64,
}

impl Default for DecentralizationConfig {
    fn default() -> Self {
        let players = (0..8).map(|i| (format!("player-{i}"), vec![1.0 + 0.1 * i as f64])).collect();
        DecentralizationConfig {
            schema_version: default_schema_version(),
            seed: None,
            players,
            m: 5,
            epsilon: 1.0,
            delta: 0.0,
        }
    }
}

impl DecentralizationConfig {
    fn check(&self) -> Result<(), CliError> {
        if self.players.is_empty() {
            return Err(CliError::invalid("players", "must not be empty"));
        }
        for (name, nodes) in &self.players {
            if nodes.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(CliError::invalid(&format!("players.{name}"), "powers must be finite and non-negative"));
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(CliError::invalid("epsilon", "must be non-negative"));
        }
        if !(0.0..=100.0).contains(&self.delta) {
            return Err(CliError::invalid("delta", "must lie in [0, 100]"));
        }
        Ok(())
    }
}
scenario_config!(DecentralizationConfig);

pub(crate) fn decentralization(cfg: &DecentralizationConfig, _ctx: &Context) -> Result<Outputs, CliError> {
    let r = decentralization_check(&cfg.players, cfg.m, cfg.epsilon, cfg.delta)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut powers = Table::new("players", &["player", "nodes", "effective_power"]);
    for (name, nodes) in &cfg.players {
        powers.push(vec![name.as_str().into(), nodes.len().into(), nodes.iter().sum::<f64>().into()]);
    }
    let mut table =
        Table::new("decentralization", &["players", "max_power", "percentile_power", "ratio", "decentralized"]);
    table.push(vec![
        r.players.into(),
        r.max_power.into(),
        r.percentile_power.into(),
        r.ratio.into(),
        r.decentralized.into(),
    ]);
    Ok(Outputs { tables: vec![powers, table], files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub population: PopulationConfig,
    pub registration: RegistrationOptions,
    /// Game parameters; `n` is replaced by the number of registered miners.
    pub params: GameParams,
    /// Behaviors assigned to registered miners in turn.
    pub behaviors: Vec<Behavior>,
    pub protocol: Protocol,
    pub topology: GossipTopology,
    pub receipt_sample_size: usize,
    pub epochs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: default_schema_version(),
            seed: None,
            population: PopulationConfig { cards: 8, passports: 4, ..PopulationConfig::default() },
            registration: RegistrationOptions { kdf_iterations: 64, aa_less_kdf_iterations: 256, ..Default::default() },
            params: default_params(),
            behaviors: vec![Behavior::Honest],
            protocol: Protocol::Receipts,
            topology: GossipTopology::Ring,
            receipt_sample_size: 3,
            epochs: 2,
        }
    }
}

impl PipelineConfig {
    fn check(&self) -> Result<(), CliError> {
        self.population.check("population")?;
        self.registration.check("registration")?;
        let mut p = self.params.clone();
        p.n = self.population.size();
        check_params(&p, "params")?;
        if self.behaviors.is_empty() {
            return Err(CliError::invalid("behaviors", "must not be empty"));
        }
        if self.epochs == 0 {
            return Err(CliError::invalid("epochs", "must be at least 1"));
        }
        Ok(())
    }
}
scenario_config!(PipelineConfig);

/// Registers the population, turns every registered identity into a miner
/// keyed by its derived credential, and simulates epochs over them.
pub(crate) fn pipeline(cfg: &PipelineConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let mut pop = generate_population(&cfg.population, ctx.seed);
    let report = run_registration(&mut pop, &cfg.registration, &Plan::default(), ctx.seed)?;
    let kdf = cfg.registration.credential().kdf;
    let mut miners = Vec::new();
    let mut registered = Table::new("miners", &["miner", "identity", "pseudonym", "pk", "behavior"]);
    for (i, digest) in report.pseudonyms.iter().enumerate() {
        let Some(digest) = digest else { continue };
        let keys = derive_keypair(&pop.holders[i].passphrase, &pop.documents[i].doc_hash(), kdf)
            .map_err(|e| CliError::Runtime(format!("identity {i}: {e}")))?;
        let behavior = cfg.behaviors[miners.len() % cfg.behaviors.len()];
        let miner = Miner::new(miners.len(), *digest, keys.secret_key().clone(), behavior);
        registered.push(vec![
            miner.id.into(),
            i.into(),
            digest.to_hex().into(),
            hex::encode(miner.pk.0).into(),
            behavior_name(behavior).into(),
        ]);
        miners.push(miner);
    }
    let mut params = cfg.params.clone();
    params.n = miners.len();
    check_params(&params, "params")?;
    let settings = EpochSettings {
        params: &params,
        protocol: cfg.protocol,
        topology: cfg.topology,
        receipt_sample_size: cfg.receipt_sample_size,
    };
    let mut out = epoch_outputs(&settings, &miners, cfg.epochs, ctx.seed, ctx.jobs);
    out.tables.insert(0, registered);
    out.files.push(Artifact { name: "registry_log.jsonl".into(), bytes: report.registry.export_log().into_bytes() });
    Ok(out)
}
