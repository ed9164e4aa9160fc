//! The per-epoch cooperate/defect game on a sharded chain.
//!
//! A cooperating miner in shard `j` with `l` cooperators earns
//! `BR/(k·l) + r·|y|/l − (c_f + |x|·c_v)`; a defector pays the penalty `p`.

mod protocol;
mod security;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use protocol::{
    assign_shards, make_population, run_coordinated_on, run_coordinated_protocol, run_receipt_on, run_receipt_protocol,
    Behavior, Class, EpochOutcome, GossipTopology, Miner, MinerOutcome, Receipt, ShardAssignment, ShardOutcome, TxId,
};
pub use security::{
    decentralization_check, epoch_failure_bound, shard_failure_monte_carlo, shard_failure_prob, DecentralizationReport,
    EpochFailureBound,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShardGameError {
    #[error("payoff of a cooperator needs at least one cooperator")]
    ZeroCooperators,
    #[error("threshold denominator is zero")]
    DegenerateDenominator,
    #[error("exhaustive check is limited to {limit} miners, got {got}")]
    TooLarge { limit: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("population is empty")]
    EmptyPopulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    /// Shard count.
    pub k: usize,
    /// Miner count.
    pub n: usize,
    /// Minimum committee size.
    pub c: usize,
    /// Cooperators needed in a shard for consensus.
    pub tau: usize,
    /// Benefit per transaction.
    pub r: f64,
    /// Block reward.
    pub br: f64,
    /// Fixed optional cost.
    pub c_f: f64,
    /// Verification cost per transaction.
    pub c_v: f64,
    /// Penalty.
    pub p: f64,
    /// Transactions assigned to each shard per epoch.
    #[serde(default = "default_txs_per_shard")]
    pub txs_per_shard: usize,
}

fn default_txs_per_shard() -> usize {
    20
}

impl GameParams {
    pub fn validate(&self) -> Result<(), ShardGameError> {
        let bad = |m: &str| Err(ShardGameError::InvalidParams(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.n < self.k {
            return bad("need at least one miner per shard");
        }
        let smallest = self.n / self.k;
        if self.tau > smallest {
            return bad("tau exceeds the smallest shard size");
        }
        if self.c > smallest {
            return bad("minimum committee size exceeds the smallest shard size");
        }
        let costs = [self.r, self.br, self.c_f, self.c_v, self.p];
        if costs.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("r, BR, c_f, c_v and p must be finite and non-negative");
        }
        Ok(())
    }
}

pub fn payoff_cooperate(params: &GameParams, l: usize, y_len: usize, x_len: usize) -> Result<f64, ShardGameError> {
    if l == 0 {
        return Err(ShardGameError::ZeroCooperators);
    }
    let l = l as f64;
    Ok(params.br / (params.k as f64 * l) + params.r * y_len as f64 / l - (params.c_f + x_len as f64 * params.c_v))
}

pub fn payoff_defect(params: &GameParams) -> f64 {
    -params.p
}

/// Transaction-count thresholds for cooperation in a shard with `l`
/// cooperators agreeing on `y_len` transactions.
///
/// The `direct` values come from solving `u_C ≥ −p`; the `reversed` values
/// use the opposite sign on `p`. They agree when `p = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta1_direct: f64,
    pub theta2_direct: f64,
    pub theta1_reversed: f64,
    pub theta2_reversed: f64,
    /// `r/l − c_v`. When negative, the inequality for miners holding the
    /// agreed list flips and cooperation requires `|x| ≤ θ1`.
    pub theta1_slope: f64,
}

fn div_or_inf(num: f64, den: f64) -> f64 {
    if den != 0.0 {
        num / den
    } else if num >= 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

pub fn cooperation_thresholds(params: &GameParams, l: usize, y_len: usize) -> Result<Thresholds, ShardGameError> {
    if l == 0 {
        return Err(ShardGameError::ZeroCooperators);
    }
    let lf = l as f64;
    let block_share = params.br / (params.k as f64 * lf);
    let slope = params.r / lf - params.c_v;
    if slope == 0.0 {
        return Err(ShardGameError::DegenerateDenominator);
    }
    let fee_share = params.r * y_len as f64 / lf;
    Ok(Thresholds {
        theta1_direct: (params.c_f - block_share - params.p) / slope,
        theta1_reversed: (params.c_f - block_share + params.p) / slope,
        // With c_v = 0 the verification cost cannot tip the decision; the
        // threshold is ±∞ depending on whether cooperation pays at all.
        theta2_direct: div_or_inf(block_share + fee_share - params.c_f + params.p, params.c_v),
        theta2_reversed: div_or_inf(block_share + fee_share - params.c_f - params.p, params.c_v),
        theta1_slope: slope,
    })
}

/// Relative slack used when comparing an integer count to a threshold, so
/// that a threshold that is an integer up to rounding counts as reached.
const CROSSOVER_SLACK: f64 = 1e-9;

fn slack(theta: f64) -> f64 {
    CROSSOVER_SLACK * theta.abs().max(1.0)
}

impl Thresholds {
    /// Whether a miner holding the agreed list of `x` transactions prefers
    /// to cooperate (ties go to cooperation).
    pub fn cooperates_on_agreed_list(&self, x: usize) -> bool {
        let x = x as f64;
        if self.theta1_slope > 0.0 {
            x >= self.theta1_direct - slack(self.theta1_direct)
        } else {
            x <= self.theta1_direct + slack(self.theta1_direct)
        }
    }

    /// Whether a miner holding a different list of `x` transactions prefers
    /// to cooperate.
    pub fn cooperates_on_other_list(&self, x: usize) -> bool {
        x as f64 <= self.theta2_direct + slack(self.theta2_direct)
    }

    /// Same decisions with the sign of `p` reversed.
    pub fn cooperates_on_agreed_list_reversed(&self, x: usize) -> bool {
        let x = x as f64;
        if self.theta1_slope > 0.0 {
            x >= self.theta1_reversed - slack(self.theta1_reversed)
        } else {
            x <= self.theta1_reversed + slack(self.theta1_reversed)
        }
    }

    pub fn cooperates_on_other_list_reversed(&self, x: usize) -> bool {
        x as f64 <= self.theta2_reversed + slack(self.theta2_reversed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Cooperate,
    Defect,
}

impl Strategy {
    pub fn flipped(self) -> Strategy {
        match self {
            Strategy::Cooperate => Strategy::Defect,
            Strategy::Defect => Strategy::Cooperate,
        }
    }
}

/// One miner's choice in a strategy profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub shard: usize,
    pub strategy: Strategy,
    pub txs: Vec<TxId>,
}

/// Largest self-consistent choice of agreed list among a shard's
/// cooperators: the most common list, ties to the smallest list hash.
fn agreed_list<'a>(lists: impl Iterator<Item = &'a Vec<TxId>>) -> Option<&'a Vec<TxId>> {
    let mut groups: Vec<(&Vec<TxId>, usize)> = Vec::new();
    for list in lists {
        match groups.iter_mut().find(|(l, _)| *l == list) {
            Some(g) => g.1 += 1,
            None => groups.push((list, 1)),
        }
    }
    groups
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| protocol::list_hash(b.0).cmp(&protocol::list_hash(a.0))))
        .map(|(l, _)| l)
}

/// Payoffs of every miner under a profile. Cooperators in a shard that
/// falls short of `tau` pay their costs and earn nothing.
pub fn profile_payoffs(params: &GameParams, profile: &[ProfileEntry]) -> Vec<f64> {
    let mut out = vec![0.0; profile.len()];
    for shard in 0..params.k {
        let members: Vec<usize> = (0..profile.len()).filter(|&i| profile[i].shard == shard).collect();
        let coop: Vec<usize> =
            members.iter().copied().filter(|&i| profile[i].strategy == Strategy::Cooperate).collect();
        let y = agreed_list(coop.iter().map(|&i| &profile[i].txs));
        for &i in &members {
            let x = profile[i].txs.len();
            out[i] = match (profile[i].strategy, y) {
                (Strategy::Defect, _) => payoff_defect(params),
                (Strategy::Cooperate, Some(y)) if coop.len() >= params.tau => {
                    payoff_cooperate(params, coop.len(), y.len(), x).expect("at least this miner cooperates")
                }
                (Strategy::Cooperate, _) => -(params.c_f + x as f64 * params.c_v),
            };
        }
    }
    out
}

pub const NASH_CHECK_LIMIT: usize = 12;

/// True iff no miner strictly gains by switching between cooperate and
/// defect while everyone else holds still.
pub fn is_nash_profile(params: &GameParams, profile: &[ProfileEntry]) -> Result<bool, ShardGameError> {
    if profile.len() > NASH_CHECK_LIMIT {
        return Err(ShardGameError::TooLarge { limit: NASH_CHECK_LIMIT, got: profile.len() });
    }
    let base = profile_payoffs(params, profile);
    let mut scratch = profile.to_vec();
    for i in 0..profile.len() {
        scratch[i].strategy = profile[i].strategy.flipped();
        let deviated = profile_payoffs(params, &scratch)[i];
        scratch[i].strategy = profile[i].strategy;
        if deviated > base[i] + 1e-12 * base[i].abs().max(1.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn params(br: f64, k: usize, r: f64, c_f: f64, c_v: f64, p: f64) -> GameParams {
        GameParams { k, n: 4 * k, c: 1, tau: 1, r, br, c_f, c_v, p, txs_per_shard: 10 }
    }

    #[test]
    fn eq_payoff_spot_value() {
        let g = params(100.0, 2, 1.0, 2.0, 0.1, 0.0);
        assert_eq!(payoff_cooperate(&g, 5, 20, 20).unwrap(), 10.0);
        let zero = params(0.0, 2, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(payoff_cooperate(&zero, 5, 20, 20).unwrap(), 0.0);
        assert_eq!(payoff_cooperate(&g, 0, 1, 1), Err(ShardGameError::ZeroCooperators));
    }

    #[test]
    fn doubling_cooperators_halves_rewards() {
        let g = params(100.0, 2, 1.0, 0.0, 0.0, 0.0);
        let a = payoff_cooperate(&g, 5, 20, 20).unwrap();
        let b = payoff_cooperate(&g, 10, 20, 20).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn defect_payoff() {
        for p in [1.0, 0.0, 2.5] {
            assert_eq!(payoff_defect(&params(0.0, 1, 0.0, 0.0, 0.0, p)), -p);
        }
    }

    #[test]
    fn threshold_examples() {
        let g = params(0.0, 1, 1.0, 5.0, 0.25, 1.0);
        let t = cooperation_thresholds(&g, 2, 20).unwrap();
        assert_eq!(t.theta1_direct, 16.0);
        assert_eq!(t.theta2_direct, 24.0);
        assert_eq!(t.theta2_reversed, 16.0);
        for x in 0..=40 {
            let u_same = payoff_cooperate(&g, 2, x, x).unwrap();
            assert_eq!(t.cooperates_on_agreed_list(x), u_same >= -g.p, "x = {x}");
            let u_other = payoff_cooperate(&g, 2, 20, x).unwrap();
            assert_eq!(t.cooperates_on_other_list(x), u_other >= -g.p, "x = {x}");
        }
        let g0 = params(0.0, 1, 1.0, 5.0, 0.25, 0.0);
        let t0 = cooperation_thresholds(&g0, 2, 20).unwrap();
        assert_eq!(t0.theta1_direct, t0.theta1_reversed);
        assert_eq!(t0.theta2_direct, t0.theta2_reversed);
    }

    #[test]
    fn degenerate_denominator() {
        let g = params(0.0, 1, 0.5, 1.0, 0.25, 0.0);
        assert_eq!(cooperation_thresholds(&g, 2, 4), Err(ShardGameError::DegenerateDenominator));
    }

    fn uniform(params: &GameParams, strategy: Strategy, x: usize) -> Vec<ProfileEntry> {
        (0..params.n).map(|i| ProfileEntry { shard: i % params.k, strategy, txs: (0..x as u64).collect() }).collect()
    }

    #[test]
    fn all_defect_is_nash_when_costs_exceed_rewards() {
        let g = params(1.0, 1, 0.01, 5.0, 0.5, 0.0);
        assert!(is_nash_profile(&g, &uniform(&g, Strategy::Defect, 10)).unwrap());
    }

    #[test]
    fn lone_cooperator_below_quorum_is_not_nash() {
        let mut g = params(100.0, 1, 1.0, 1.0, 0.1, 0.0);
        g.tau = 3;
        let mut profile = uniform(&g, Strategy::Defect, 10);
        profile[0].strategy = Strategy::Cooperate;
        assert!(!is_nash_profile(&g, &profile).unwrap());
    }

    #[test]
    fn too_large() {
        let mut g = params(1.0, 1, 0.0, 0.0, 0.0, 0.0);
        g.n = 13;
        assert!(matches!(is_nash_profile(&g, &uniform(&g, Strategy::Defect, 1)), Err(ShardGameError::TooLarge { .. })));
    }

    proptest::proptest! {
        #[test]
        fn thresholds_match_brute_force(
            br in 0.0..200.0f64, k in 1usize..4, r in 0.0..3.0f64, c_f in 0.0..20.0f64,
            c_v in 0.01..1.0f64, p in 0.0..5.0f64, l in 1usize..10, y_len in 0usize..60, x in 0usize..80,
        ) {
            let g = params(br, k, r, c_f, c_v, p);
            let Ok(t) = cooperation_thresholds(&g, l, y_len) else { return Ok(()) };
            let same = payoff_cooperate(&g, l, x, x).unwrap() + p;
            if same.abs() > 1e-6 {
                proptest::prop_assert_eq!(t.cooperates_on_agreed_list(x), same >= 0.0);
            }
            let other = payoff_cooperate(&g, l, y_len, x).unwrap() + p;
            if other.abs() > 1e-6 {
                proptest::prop_assert_eq!(t.cooperates_on_other_list(x), other >= 0.0);
            }
            let g0 = params(br, k, r, c_f, c_v, 0.0);
            let t0 = cooperation_thresholds(&g0, l, y_len).unwrap();
            proptest::prop_assert_eq!(t0.theta1_direct, t0.theta1_reversed);
            proptest::prop_assert_eq!(t0.theta2_direct, t0.theta2_reversed);
        }

        #[test]
        fn threshold_profiles_are_nash(
            br in 0.0..200.0f64, r in 0.0..3.0f64, c_f in 0.0..20.0f64, c_v in 0.01..1.0f64,
            p in 0.0..5.0f64, n in 1usize..=12, tau_frac in 0.0..1.0f64, x in 0usize..40,
        ) {
            let mut g = params(br, 1, r, c_f, c_v, p);
            g.n = n;
            g.tau = 1 + ((n - 1) as f64 * tau_frac) as usize;
            let Ok(t) = cooperation_thresholds(&g, n, x) else { return Ok(()) };
            let margin = payoff_cooperate(&g, n, x, x).unwrap() + p;
            proptest::prop_assume!(margin.abs() > 1e-6);
            let profile = uniform(&g, Strategy::Cooperate, x);
            if t.cooperates_on_agreed_list(x) {
                proptest::prop_assert!(is_nash_profile(&g, &profile).unwrap());
            } else {
                proptest::prop_assert!(!is_nash_profile(&g, &profile).unwrap());
            }
        }
    }

    #[test]
    fn validation() {
        let mut g = params(1.0, 2, 0.0, 0.0, 0.0, 0.0);
        assert!(g.validate().is_ok());
        g.tau = 5;
        assert!(g.validate().is_err());
        g.tau = 1;
        g.p = -1.0;
        assert!(g.validate().is_err());
    }
}
