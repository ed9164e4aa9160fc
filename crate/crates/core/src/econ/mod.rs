//! Economic models: mining as a congestion game, strategic dominance of
//! uniformly distributed rewards, competing payment networks, and the
//! stationary circulation equilibrium.

mod circulation;
mod congestion;
mod dominance;
mod network;

use thiserror::Error;

pub use circulation::{fee_balance, gamma_dynamics, stationary_dm_output, CirculationParams, DmOutput, FeeSplit};
pub use congestion::{
    congestion_deviations, is_congestion_nash, miner_utility, potential, price_of_crypto_anarchy, puzzle_win_prob,
    solve_congestion_nash, total_mining_cost, Allocation, CongestionInstance, CongestionSolution, Deviation, Direction,
};
pub use dominance::{
    calibrate_zipf_exponent, idsds, is_ess, udce_vs_plfc_game, Elimination, EssCondition, EssReport, IdsdsResult,
    PayoffMatrix, PowCost, ShareModel, SymmetricGame, PLFC, UDCE,
};
pub use network::{
    estimate_elasticities, integrate_ratios, join_probabilities, overtake_analysis, ratio_ode_step,
    simulate_network_growth, ElasticityObservation, ExpectationMode, JoinProbabilities, NetworkParams, NetworkState,
    OvertakeReport, RatioState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconError {
    #[error("at least one miner is required")]
    ZeroMiners,
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("baseline cost must be strictly positive")]
    DegenerateBaseline,
    #[error("both networks have no members on the observed side")]
    BothSidesEmpty,
    #[error("ratio dynamics need positive denominators")]
    DegenerateRatio,
    #[error("networks have equal counts; elasticity is not identifiable")]
    IndistinguishableNetworks,
    #[error("observed join share is 0 or 1; elasticity is unbounded")]
    DegenerateShare,
    #[error("parameter out of domain: {0}")]
    DomainError(String),
    #[error("exponent ratio equals one")]
    ExponentSingularity,
    #[error("transaction volume must be positive")]
    ZeroVolume,
    #[error("exhaustive computation limited to {limit}, needs {got}")]
    TooLarge { limit: usize, got: usize },
}

/// Bisection on a bracketing interval; `f(lo)` and `f(hi)` must differ in sign.
pub(crate) fn bisect(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) < tol {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
