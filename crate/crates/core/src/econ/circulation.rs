//! Stationary decentralized-market output when only part of newly minted
//! money circulates, the equilibrium path of the money growth factor, and
//! the per-payment fee that finances a fixed cost.

use serde::{Deserialize, Serialize};

use super::{bisect, EconError};

/// Utility `u(q) = q^{1-η}/(1-η)` and effort cost `w(q) = q^{1+α}/(1+α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirculationParams {
    /// Discount factor in `(0, 1)`.
    pub beta: f64,
    /// Curvature of `u` in `(0, 1)`.
    pub eta: f64,
    /// Convexity of `w`, non-negative.
    pub alpha: f64,
    /// Fraction of new money that circulates, in `(0, 1]`.
    pub delta: f64,
    /// Match probability in `(0, 1)`.
    pub sigma: f64,
    /// Buyer's bargaining share in `[0, 1]`.
    pub theta: f64,
}

impl CirculationParams {
    pub fn validate(&self) -> Result<(), EconError> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        let checks = [
            (open(self.beta), "beta must lie in (0, 1)"),
            (open(self.eta), "eta must lie in (0, 1)"),
            (self.alpha >= 0.0 && self.alpha.is_finite(), "alpha must be non-negative"),
            (self.delta > 0.0 && self.delta <= 1.0, "delta must lie in (0, 1]"),
            (open(self.sigma), "sigma must lie in (0, 1)"),
            ((0.0..=1.0).contains(&self.theta), "theta must lie in [0, 1]"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(EconError::DomainError(msg.to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmOutput {
    /// Efficient output, where `u' = w'`.
    pub q_star: f64,
    /// Output with full circulation.
    pub q_hat_full: f64,
    /// Output when only `delta` circulates.
    pub q_hat_delta: f64,
    /// Full circulation yields strictly more output than partial circulation.
    pub pareto_dominates: bool,
    /// Largest gap between a closed form and its numerical root.
    pub root_check_error: f64,
}

const ROOT_TOL: f64 = 1e-9;

/// Solves `1/β = δ·u'(q)/w'(q) + 1 − δ` with `u'/w' = q^{-(η+α)}`.
pub fn stationary_dm_output(params: &CirculationParams) -> Result<DmOutput, EconError> {
    params.validate()?;
    let e = params.eta + params.alpha;
    let ratio = |q: f64| q.powf(-e);
    let solve_for = |delta: f64| (delta / (1.0 / params.beta - 1.0 + delta)).powf(1.0 / e);
    // Roots are bracketed in ln q, since q̂(δ) can be tiny for small δ.
    let root = |delta: f64| {
        bisect(-2000.0, 0.0, 1e-13, |x| delta * ratio(x.exp()) + 1.0 - delta - 1.0 / params.beta)
            .expect("bracketed: the left side falls from +inf to 1 < 1/beta")
            .exp()
    };
    // u'(q) = w'(q) reads q^{-η} = q^{α}.
    let q_star = 1.0;
    let star_root = bisect(-50.0, 50.0, 1e-13, |x| ratio(x.exp()) - 1.0).expect("bracketed").exp();
    let q_hat_full = params.beta.powf(1.0 / e);
    let q_hat_delta = if params.delta == 1.0 { q_hat_full } else { solve_for(params.delta) };
    let root_check_error = [(root(1.0), q_hat_full), (root(params.delta), q_hat_delta), (star_root, q_star)]
        .iter()
        .map(|(numeric, closed)| (numeric - closed).abs())
        .fold(0.0, f64::max);
    if root_check_error > ROOT_TOL {
        return Err(EconError::DomainError(format!("closed form and root disagree by {root_check_error:e}")));
    }
    Ok(DmOutput {
        q_star,
        q_hat_full,
        q_hat_delta,
        pareto_dominates: params.delta < 1.0 && q_hat_delta < q_hat_full && q_hat_full < q_star,
        root_check_error,
    })
}

/// Iterates `γ_{t+1} = γ_t^{r/(r-1)}` with `r = (1+α)/(η+α)`; returns
/// `steps + 1` values starting at `gamma0`.
pub fn gamma_dynamics(gamma0: f64, eta: f64, alpha: f64, steps: usize) -> Result<Vec<f64>, EconError> {
    if !(gamma0 > 0.0) {
        return Err(EconError::DomainError("gamma0 must be positive".into()));
    }
    let r = (1.0 + alpha) / (eta + alpha);
    if r - 1.0 == 0.0 || !r.is_finite() {
        return Err(EconError::ExponentSingularity);
    }
    let exponent = r / (r - 1.0);
    let mut seq = Vec::with_capacity(steps + 1);
    let mut g = gamma0;
    seq.push(g);
    for _ in 0..steps {
        g = g.powf(exponent);
        seq.push(g);
    }
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeSplit {
    pub fee: f64,
    pub buyer: f64,
    pub seller: f64,
}

/// Fee per payment that finances cost `omega` over transaction measure
/// `volume`; `theta` only divides it between buyer and seller.
pub fn fee_balance(omega: f64, volume: f64, theta: f64) -> Result<FeeSplit, EconError> {
    if !(volume > 0.0) {
        return Err(EconError::ZeroVolume);
    }
    let fee = omega / volume;
    Ok(FeeSplit { fee, buyer: theta * fee, seller: (1.0 - theta) * fee })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: f64, eta: f64, alpha: f64, delta: f64) -> CirculationParams {
        CirculationParams { beta, eta, alpha, delta, sigma: 0.5, theta: 0.5 }
    }

    #[test]
    fn worked_example() {
        let out = stationary_dm_output(&params(0.9, 0.5, 0.5, 0.5)).unwrap();
        assert_eq!(out.q_star, 1.0);
        assert!((out.q_hat_full - 0.9).abs() < 1e-12);
        assert!((out.q_hat_delta - 0.45 / 0.55).abs() < 1e-12);
        assert!(out.pareto_dominates);
        let full = stationary_dm_output(&params(0.9, 0.5, 0.5, 1.0)).unwrap();
        assert_eq!(full.q_hat_delta, full.q_hat_full);
        assert!(!full.pareto_dominates);
        assert!(stationary_dm_output(&params(1.0, 0.5, 0.5, 0.5)).is_err());
    }

    #[test]
    fn dominance_over_grid() {
        for beta in [0.5, 0.8, 0.95, 0.99] {
            for eta in [0.1, 0.5, 0.9] {
                for alpha in [0.0, 0.5, 2.0] {
                    for delta in [0.01, 0.3, 0.7, 0.99] {
                        let out = stationary_dm_output(&params(beta, eta, alpha, delta)).unwrap();
                        assert!(out.pareto_dominates, "{beta} {eta} {alpha} {delta}");
                        assert!(out.root_check_error <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn gamma_sequences() {
        assert!(gamma_dynamics(1.0, 0.5, 0.5, 10).unwrap().iter().all(|&g| g == 1.0));
        let seq = gamma_dynamics(0.9, 0.5, 0.5, 6).unwrap();
        assert!((seq[1] - 0.729).abs() < 1e-12);
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
        assert!(seq[6] < 1e-10);
        assert_eq!(gamma_dynamics(0.9, 1.0, 0.5, 3), Err(EconError::ExponentSingularity));
    }

    #[test]
    fn fees() {
        assert_eq!(fee_balance(10.0, 100.0, 0.3).unwrap().fee, 0.1);
        assert_eq!(fee_balance(0.0, 100.0, 0.3).unwrap().fee, 0.0);
        for theta in [0.0, 0.25, 1.0] {
            let f = fee_balance(10.0, 100.0, theta).unwrap();
            assert_eq!(f.fee, 0.1);
            assert!((f.buyer + f.seller - f.fee).abs() < 1e-15);
        }
        assert_eq!(fee_balance(1.0, 0.0, 0.5), Err(EconError::ZeroVolume));
    }
}
