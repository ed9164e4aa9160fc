//! Economic model scenarios.

use serde::{Deserialize, Serialize};
use zkpoi_core::econ::{
    fee_balance, gamma_dynamics, idsds, integrate_ratios, is_congestion_nash, is_ess, overtake_analysis,
    price_of_crypto_anarchy, simulate_network_growth, solve_congestion_nash, stationary_dm_output, total_mining_cost,
    udce_vs_plfc_game, CirculationParams, CongestionInstance, Direction, EconError, EssCondition, NetworkParams,
    NetworkState, PowCost, RatioState, ShareModel, SymmetricGame,
};

use crate::output::{Outputs, Table};
use crate::{default_schema_version, par_map, scenario_config, CliError, Context};

fn runtime(e: EconError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn check_instance(inst: &CongestionInstance, path: &str) -> Result<(), CliError> {
    inst.validate().map_err(|e| CliError::invalid(path, e))?;
    if inst.servers() != 1 {
        return Err(CliError::invalid(path, "only single-server instances are supported"));
    }
    Ok(())
}

fn two_puzzle_instance() -> CongestionInstance {
    CongestionInstance::single(&[1.0, 1.0], &[0.0, 0.0], 2, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CongestionConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub instance: CongestionInstance,
}

impl Default for CongestionConfig {
    fn default() -> Self {
        CongestionConfig { schema_version: default_schema_version(), seed: None, instance: two_puzzle_instance() }
    }
}

impl CongestionConfig {
    fn check(&self) -> Result<(), CliError> {
        check_instance(&self.instance, "instance")
    }
}
scenario_config!(CongestionConfig);

fn slot(v: Option<usize>) -> String {
    v.map_or_else(|| "idle".to_string(), |k| k.to_string())
}

pub(crate) fn congestion(cfg: &CongestionConfig, _ctx: &Context) -> Result<Outputs, CliError> {
    let inst = &cfg.instance;
    let sol = solve_congestion_nash(inst).map_err(runtime)?;
    let mut alloc = Table::new("allocation", &["puzzle", "miners"]);
    for k in 0..inst.puzzles() {
        alloc.push(vec![k.into(), sol.allocation.puzzle_load(k).into()]);
    }
    let mut summary = Table::new("equilibrium", &["potential", "direction", "nash", "mining_cost"]);
    let direction = match sol.direction {
        Direction::Minimize => "minimize",
        Direction::Maximize => "maximize",
    };
    summary.push(vec![
        sol.potential.into(),
        direction.into(),
        is_congestion_nash(inst, &sol.allocation).map_err(runtime)?.into(),
        total_mining_cost(inst, &sol.allocation).into(),
    ]);
    let mut cert = Table::new("deviations", &["from", "to", "utility_change"]);
    for d in &sol.certificate {
        cert.push(vec![slot(d.from).into(), slot(d.to).into(), d.delta.into()]);
    }
    Ok(Outputs { tables: vec![alloc, summary, cert], files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoaConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub instance: CongestionInstance,
    /// Resource cost of the identity-based baseline.
    pub zkpoi_cost: f64,
    /// Factors applied to every `gamma` and to `zkpoi_cost` together.
    pub scale_sweep: Vec<f64>,
}

impl Default for PoaConfig {
    fn default() -> Self {
        PoaConfig {
            schema_version: default_schema_version(),
            seed: None,
            instance: CongestionInstance::single(&[1.0, 1.0], &[0.1, 0.1], 2, 1.0),
            zkpoi_cost: 0.01,
            scale_sweep: (1..=10).map(|i| i as f64 * 0.5).collect(),
        }
    }
}

impl PoaConfig {
    fn check(&self) -> Result<(), CliError> {
        check_instance(&self.instance, "instance")?;
        if !(self.zkpoi_cost > 0.0) {
            return Err(CliError::invalid("zkpoi_cost", "must be strictly positive"));
        }
        if let Some(i) = self.scale_sweep.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(CliError::invalid(&format!("scale_sweep[{i}]"), "must be positive and finite"));
        }
        Ok(())
    }
}
scenario_config!(PoaConfig);

pub(crate) fn poa(cfg: &PoaConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let mut scales = vec![1.0];
    scales.extend(cfg.scale_sweep.iter().copied());
    let results = par_map(ctx.jobs, &scales, |&s| {
        let mut inst = cfg.instance.clone();
        inst.gamma.iter_mut().flatten().for_each(|g| *g *= s);
        let baseline = cfg.zkpoi_cost * s;
        price_of_crypto_anarchy(&inst, |a| total_mining_cost(&inst, a), baseline).map(|r| (s, baseline, r))
    });
    let mut table = Table::new("price_of_anarchy", &["scale", "zkpoi_cost", "ratio"]);
    for r in results {
        let (s, baseline, ratio) = r.map_err(runtime)?;
        table.push(vec![s.into(), baseline.into(), ratio.into()]);
    }
    Ok(Outputs { tables: vec![table], files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominanceConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub miners: usize,
    pub reward: f64,
    /// Per-miner cost of the uniformly distributed currency.
    pub udce_cost: f64,
    pub pow_cost: PowCost,
    pub shares: ShareModel,
}

impl Default for DominanceConfig {
    fn default() -> Self {
        DominanceConfig {
            schema_version: default_schema_version(),
            seed: None,
            miners: 1000,
            reward: 1000.0,
            udce_cost: 1e-3,
            pow_cost: PowCost::default(),
            shares: ShareModel::ZipfCalibrated { top: 16, mass: 0.9 },
        }
    }
}

impl DominanceConfig {
    fn check(&self) -> Result<(), CliError> {
        if self.miners < 2 {
            return Err(CliError::invalid("miners", "need at least two miners"));
        }
        if !(self.reward > 0.0) || !self.reward.is_finite() {
            return Err(CliError::invalid("reward", "must be positive and finite"));
        }
        if !(self.udce_cost >= 0.0) {
            return Err(CliError::invalid("udce_cost", "must be non-negative"));
        }
        Ok(())
    }
}
scenario_config!(DominanceConfig);

pub(crate) fn dominance(cfg: &DominanceConfig, _ctx: &Context) -> Result<Outputs, CliError> {
    let game = udce_vs_plfc_game(cfg.miners, cfg.pow_cost, cfg.reward, cfg.udce_cost, &cfg.shares).map_err(runtime)?;
    let shares = cfg.shares.shares(cfg.miners).map_err(runtime)?;
    let result = idsds(&game);
    let mut trace = Table::new("eliminations", &["round", "player", "share", "strategy", "dominated_by"]);
    for e in &result.trace {
        trace.push(vec![
            e.round.into(),
            e.player.into(),
            shares[e.player].into(),
            e.strategy.as_str().into(),
            e.dominated_by.as_str().into(),
        ]);
    }
    let mut summary = Table::new(
        "dominance",
        &["miners", "udce_players", "plfc_players", "unique_profile", "dominant_strategy_equilibrium", "nash"],
    );
    let (udce, plfc) = match &result.unique_profile {
        Some(p) => {
            let udce = p.iter().filter(|&&s| s == zkpoi_core::econ::UDCE).count();
            (udce, p.len() - udce)
        }
        None => (0, 0),
    };
    summary.push(vec![
        cfg.miners.into(),
        udce.into(),
        plfc.into(),
        result.unique_profile.is_some().into(),
        result.dominant_strategy_equilibrium.into(),
        result.nash.into(),
    ]);
    Ok(Outputs { tables: vec![summary, trace], files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EssCase {
    pub name: String,
    /// `payoff[a][b]`: payoff of playing `a` against `b`.
    pub payoff: [[f64; 2]; 2],
    pub candidate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EssConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub games: Vec<EssCase>,
}

impl Default for EssConfig {
    fn default() -> Self {
        let case = |name: &str, payoff| EssCase { name: name.into(), payoff, candidate: 0 };
        EssConfig {
            schema_version: default_schema_version(),
            seed: None,
            games: vec![
                case("strict-nash", [[3.0, 0.0], [2.0, 0.0]]),
                case("stable-against-mutants", [[1.0, 2.0], [1.0, 1.0]]),
                case("neutral", [[1.0, 1.0], [1.0, 1.0]]),
            ],
        }
    }
}

impl EssConfig {
    fn check(&self) -> Result<(), CliError> {
        for (i, g) in self.games.iter().enumerate() {
            if g.candidate > 1 {
                return Err(CliError::invalid(&format!("games[{i}].candidate"), "must be 0 or 1"));
            }
            if g.payoff.iter().flatten().any(|v| !v.is_finite()) {
                return Err(CliError::invalid(&format!("games[{i}].payoff"), "must be finite"));
            }
        }
        Ok(())
    }
}
scenario_config!(EssConfig);

pub(crate) fn ess(cfg: &EssConfig, _ctx: &Context) -> Result<Outputs, CliError> {
    let mut table = Table::new("ess", &["game", "candidate", "is_ess", "condition", "mixture_holds", "nash"]);
    for g in &cfg.games {
        let r = is_ess(&SymmetricGame { payoff: g.payoff }, g.candidate);
        let condition = match r.condition {
            Some(EssCondition::StrictNash) => "strict-nash",
            Some(EssCondition::StableAgainstMutants) => "stable-against-mutants",
            None => "none",
        };
        table.push(vec![
            g.name.as_str().into(),
            g.candidate.into(),
            r.is_ess.into(),
            condition.into(),
            r.mixture_holds.into(),
            r.nash.into(),
        ]);
    }
    Ok(Outputs { tables: vec![table], files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeConfig {
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OvertakeConfig {
    pub m_incumbent: u64,
    pub lambda: f64,
    pub expected_customers_new: f64,
    pub expected_customers_old: f64,
}

impl Default for OvertakeConfig {
    fn default() -> Self {
        OvertakeConfig { m_incumbent: 10, lambda: 0.5, expected_customers_new: 30.0, expected_customers_old: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub params: NetworkParams,
    pub initial: NetworkState,
    pub steps: usize,
    /// Independent runs, seeded `seed`, `seed + 1`, ...
    pub runs: usize,
    /// Trajectory sampling interval for the first run.
    pub sample_every: usize,
    pub ode: OdeConfig,
    pub overtake: OvertakeConfig,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig { t_end: 10.0, dt: 1e-3 }
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            schema_version: default_schema_version(),
            seed: None,
            params: NetworkParams { lambda: 0.5, alpha: 3.0, beta: 3.0, expectation_mode: Default::default() },
            initial: NetworkState { m_a: 6, m_b: 4, c_a: 6, c_b: 4 },
            steps: 10_000,
            runs: 20,
            sample_every: 100,
            ode: OdeConfig::default(),
            overtake: OvertakeConfig::default(),
        }
    }
}

impl NetworkConfig {
    fn check(&self) -> Result<(), CliError> {
        self.params.validate().map_err(|e| CliError::invalid("params", e))?;
        let s = &self.initial;
        if s.m_a == 0 || s.m_b == 0 || s.c_a == 0 || s.c_b == 0 {
            return Err(CliError::invalid("initial", "every network needs at least one member per side"));
        }
        if self.runs == 0 {
            return Err(CliError::invalid("runs", "must be at least 1"));
        }
        if self.sample_every == 0 {
            return Err(CliError::invalid("sample_every", "must be at least 1"));
        }
        if !(self.ode.dt > 0.0) || !(self.ode.t_end >= 0.0) {
            return Err(CliError::invalid("ode", "need dt > 0 and t_end >= 0"));
        }
        if !(0.0..=1.0).contains(&self.overtake.lambda) {
            return Err(CliError::invalid("overtake.lambda", "must lie in [0, 1]"));
        }
        Ok(())
    }
}
scenario_config!(NetworkConfig);

pub(crate) fn network(cfg: &NetworkConfig, ctx: &Context) -> Result<Outputs, CliError> {
    let seeds: Vec<u64> = (0..cfg.runs as u64).map(|i| ctx.seed.wrapping_add(i)).collect();
    let runs = par_map(ctx.jobs, &seeds, |&s| simulate_network_growth(cfg.initial, &cfg.params, cfg.steps, s));
    let mut terminal = Table::new("terminal", &["run", "seed", "m_a", "m_b", "c_a", "c_b", "merchant_share_a"]);
    let mut trajectory = Table::new("trajectory", &["step", "m_a", "m_b", "c_a", "c_b", "merchant_share_a"]);
    for (i, (run, &s)) in runs.into_iter().zip(&seeds).enumerate() {
        let run = run.map_err(runtime)?;
        let last = run.last().expect("trajectory includes the start");
        terminal.push(vec![
            i.into(),
            s.into(),
            last.m_a.into(),
            last.m_b.into(),
            last.c_a.into(),
            last.c_b.into(),
            last.merchant_share_a().into(),
        ]);
        if i == 0 {
            for (step, st) in run.iter().enumerate().step_by(cfg.sample_every) {
                trajectory.push(vec![
                    step.into(),
                    st.m_a.into(),
                    st.m_b.into(),
                    st.c_a.into(),
                    st.c_b.into(),
                    st.merchant_share_a().into(),
                ]);
            }
        }
    }

    let init = &cfg.initial;
    let start = RatioState {
        merchant_ratio: init.m_a as f64 / init.m_b as f64,
        customer_ratio: init.c_a as f64 / init.c_b as f64,
        m_b: init.m_b as f64,
        c_b: init.c_b as f64,
    };
    let full = integrate_ratios(&start, &cfg.params, cfg.ode.t_end, cfg.ode.dt).map_err(runtime)?;
    let half = integrate_ratios(&start, &cfg.params, cfg.ode.t_end, cfg.ode.dt / 2.0).map_err(runtime)?;
    let mut ode = Table::new("ratio_ode", &["t_end", "dt", "merchant_ratio", "customer_ratio", "halved_step_drift"]);
    let drift =
        (full.merchant_ratio - half.merchant_ratio).abs().max((full.customer_ratio - half.customer_ratio).abs());
    ode.push(vec![
        cfg.ode.t_end.into(),
        cfg.ode.dt.into(),
        full.merchant_ratio.into(),
        full.customer_ratio.into(),
        drift.into(),
    ]);

    let o = &cfg.overtake;
    let report = overtake_analysis(o.m_incumbent, o.lambda, o.expected_customers_new, o.expected_customers_old);
    let mut overtake = Table::new("overtake", &["m_incumbent", "lambda", "steps_needed", "condition_holds"]);
    overtake.push(vec![
        o.m_incumbent.into(),
        o.lambda.into(),
        report.steps_needed.into(),
        report.condition_holds.into(),
    ]);
    Ok(Outputs { tables: vec![terminal, trajectory, ode, overtake], files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CirculationConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub beta: f64,
    pub eta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub theta: f64,
    /// Circulating fractions to tabulate.
    pub deltas: Vec<f64>,
    pub gamma0: f64,
    pub gamma_steps: usize,
    /// Fixed cost financed by fees, and the payment volume carrying it.
    pub omega: f64,
    pub volume: f64,
}

impl Default for CirculationConfig {
    fn default() -> Self {
        CirculationConfig {
            schema_version: default_schema_version(),
            seed: None,
            beta: 0.9,
            eta: 0.5,
            alpha: 0.5,
            sigma: 0.5,
            theta: 0.5,
            deltas: (1..=10).map(|i| i as f64 / 10.0).collect(),
            gamma0: 0.9,
            gamma_steps: 10,
            omega: 10.0,
            volume: 100.0,
        }
    }
}

impl CirculationConfig {
    fn params(&self, delta: f64) -> CirculationParams {
        CirculationParams {
            beta: self.beta,
            eta: self.eta,
            alpha: self.alpha,
            delta,
            sigma: self.sigma,
            theta: self.theta,
        }
    }

    fn check(&self) -> Result<(), CliError> {
        if self.deltas.is_empty() {
            return Err(CliError::invalid("deltas", "must not be empty"));
        }
        for (i, &d) in self.deltas.iter().enumerate() {
            self.params(d).validate().map_err(|e| CliError::invalid(&format!("deltas[{i}]"), e))?;
        }
        if !(self.gamma0 > 0.0) {
            return Err(CliError::invalid("gamma0", "must be positive"));
        }
        if !(self.volume > 0.0) {
            return Err(CliError::invalid("volume", "must be positive"));
        }
        Ok(())
    }
}
scenario_config!(CirculationConfig);

pub(crate) fn circulation(cfg: &CirculationConfig, _ctx: &Context) -> Result<Outputs, CliError> {
    let mut table = Table::new(
        "circulation",
        &["delta", "q_hat_delta", "q_hat_full", "q_star", "pareto_dominates", "root_check_error"],
    );
    let mut deltas = cfg.deltas.clone();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    for d in deltas {
        let out = stationary_dm_output(&cfg.params(d)).map_err(runtime)?;
        table.push(vec![
            d.into(),
            out.q_hat_delta.into(),
            out.q_hat_full.into(),
            out.q_star.into(),
            out.pareto_dominates.into(),
            out.root_check_error.into(),
        ]);
    }
    let mut gamma = Table::new("gamma_path", &["t", "gamma"]);
    match gamma_dynamics(cfg.gamma0, cfg.eta, cfg.alpha, cfg.gamma_steps) {
        Ok(path) => path.iter().enumerate().for_each(|(t, g)| gamma.push(vec![t.into(), (*g).into()])),
        Err(EconError::ExponentSingularity) => {}
        Err(e) => return Err(runtime(e)),
    }
    let fee = fee_balance(cfg.omega, cfg.volume, cfg.theta).map_err(runtime)?;
    let mut fees = Table::new("fee", &["omega", "volume", "fee", "buyer", "seller"]);
    fees.push(vec![cfg.omega.into(), cfg.volume.into(), fee.fee.into(), fee.buyer.into(), fee.seller.into()]);
    Ok(Outputs { tables: vec![table, gamma, fees], files: Vec::new() })
}
