//! Collusion probability of a randomly sampled shard and the
//! decentralization metric over player power.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::ShardGameError;

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// `P[X ≥ ⌈n/3⌉]` for `X ~ Binomial(n, m)`: the chance that a shard of `n`
/// miners drawn from a population with malicious fraction `m` holds at
/// least a third malicious members.
pub fn shard_failure_prob(n: u64, m: f64) -> f64 {
    assert!(n >= 1 && (0.0..=1.0).contains(&m), "need n >= 1 and 0 <= m <= 1");
    let threshold = n.div_ceil(3);
    if m == 0.0 {
        return 0.0;
    }
    if m == 1.0 {
        return 1.0;
    }
    let (lm, lq) = (m.ln(), (-m).ln_1p());
    let tail: f64 = (threshold..=n).map(|k| (ln_choose(n, k) + k as f64 * lm + (n - k) as f64 * lq).exp()).sum();
    tail.min(1.0)
}

/// Sampling estimate of [`shard_failure_prob`] with its standard error.
pub fn shard_failure_monte_carlo(n: u64, m: f64, draws: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let threshold = n.div_ceil(3);
    let hits = (0..draws).filter(|_| (0..n).filter(|_| rng.gen_bool(m)).count() as u64 >= threshold).count();
    let p = hits as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochFailureBound {
    /// `Σ_{k=0}^{l} 4^{-k}·n·P_S`.
    pub finite: f64,
    /// `(4/3)·n·P_S`, the `l → ∞` value.
    pub limit: f64,
}

pub fn epoch_failure_bound(num_shards: u64, per_shard_prob: f64, views: u32) -> EpochFailureBound {
    let base = num_shards as f64 * per_shard_prob;
    let finite = (0..=views).map(|k| 0.25f64.powi(k as i32) * base).sum();
    EpochFailureBound { finite, limit: 4.0 / 3.0 * base }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecentralizationReport {
    pub players: usize,
    pub max_power: f64,
    pub percentile_power: f64,
    pub ratio: f64,
    pub decentralized: bool,
}

/// Checks `(m, ε, δ)`-decentralization: at least `m` players, and the
/// richest player's effective power is within `1+ε` of the `δ`-th
/// percentile player's (nearest rank, ascending; `δ = 0` is the poorest).
pub fn decentralization_check(
    player_powers: &BTreeMap<String, Vec<f64>>,
    m: usize,
    epsilon: f64,
    delta: f64,
) -> Result<DecentralizationReport, ShardGameError> {
    if player_powers.is_empty() {
        return Err(ShardGameError::EmptyPopulation);
    }
    if !(0.0..=100.0).contains(&delta) {
        return Err(ShardGameError::InvalidParams("delta must lie in [0, 100]".into()));
    }
    let mut effective: Vec<f64> = player_powers.values().map(|nodes| nodes.iter().sum()).collect();
    effective.sort_by(f64::total_cmp);
    let n = effective.len();
    let rank = ((delta / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    let max_power = effective[n - 1];
    let percentile_power = effective[rank - 1];
    let ratio = if percentile_power > 0.0 {
        max_power / percentile_power
    } else if max_power == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(DecentralizationReport {
        players: n,
        max_power,
        percentile_power,
        ratio,
        decentralized: n >= m && ratio <= 1.0 + epsilon,
    })
}
