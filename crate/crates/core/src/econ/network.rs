//! Two competing two-sided payment networks, `A` and `B`. Merchants join
//! according to customer counts (elasticity `beta`), customers according to
//! merchant counts (elasticity `alpha`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::EconError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpectationMode {
    /// Decide on current counts.
    #[default]
    Current,
    /// Decide on `E(count^elasticity)` one step ahead.
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Probability that an arriving user is a customer.
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub expectation_mode: ExpectationMode,
}

impl NetworkParams {
    pub fn validate(&self) -> Result<(), EconError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(EconError::DomainError("lambda must lie in [0, 1]".into()));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(EconError::DomainError("elasticities must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkState {
    pub m_a: u64,
    pub m_b: u64,
    pub c_a: u64,
    pub c_b: u64,
}

impl NetworkState {
    pub fn merchant_share_a(&self) -> f64 {
        self.m_a as f64 / (self.m_a + self.m_b) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoinProbabilities {
    /// `(P[join A], P[join B])` for an arriving merchant.
    pub merchant: (f64, f64),
    /// Same for an arriving customer.
    pub customer: (f64, f64),
}

fn split(a: f64, b: f64) -> Result<(f64, f64), EconError> {
    let total = a + b;
    if total == 0.0 {
        return Err(EconError::BothSidesEmpty);
    }
    Ok((a / total, b / total))
}

fn current(state: &NetworkState, p: &NetworkParams) -> Result<JoinProbabilities, EconError> {
    let pow = |n: u64, e: f64| (n as f64).powf(e);
    Ok(JoinProbabilities {
        merchant: split(pow(state.c_a, p.beta), pow(state.c_b, p.beta))?,
        customer: split(pow(state.m_a, p.alpha), pow(state.m_b, p.alpha))?,
    })
}

pub fn join_probabilities(state: &NetworkState, params: &NetworkParams) -> Result<JoinProbabilities, EconError> {
    params.validate()?;
    let now = current(state, params)?;
    if params.expectation_mode == ExpectationMode::Current {
        return Ok(now);
    }
    // E(x'^e) where x' gains one member with the probability that the next
    // arrival is on that side and picks that network.
    let ahead = |n: u64, e: f64, p_gain: f64| {
        let n = n as f64;
        p_gain * (n + 1.0).powf(e) + (1.0 - p_gain) * n.powf(e)
    };
    let lam = params.lambda;
    Ok(JoinProbabilities {
        merchant: split(
            ahead(state.c_a, params.beta, lam * now.customer.0),
            ahead(state.c_b, params.beta, lam * now.customer.1),
        )?,
        customer: split(
            ahead(state.m_a, params.alpha, (1.0 - lam) * now.merchant.0),
            ahead(state.m_b, params.alpha, (1.0 - lam) * now.merchant.1),
        )?,
    })
}

/// One arrival per step. Returns `steps + 1` states including the start.
pub fn simulate_network_growth(
    state: NetworkState,
    params: &NetworkParams,
    steps: usize,
    seed: u64,
) -> Result<Vec<NetworkState>, EconError> {
    params.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut s = state;
    let mut trajectory = Vec::with_capacity(steps + 1);
    trajectory.push(s);
    for _ in 0..steps {
        let probs = join_probabilities(&s, params)?;
        let is_customer = rng.gen_bool(params.lambda);
        let draw: f64 = rng.gen();
        if is_customer {
            if draw < probs.customer.0 {
                s.c_a += 1;
            } else {
                s.c_b += 1;
            }
        } else if draw < probs.merchant.0 {
            s.m_a += 1;
        } else {
            s.m_b += 1;
        }
        trajectory.push(s);
    }
    Ok(trajectory)
}

/// Continuous approximation: ratios `A/B` on each side plus the `B`
/// counts that scale their rates of change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioState {
    pub merchant_ratio: f64,
    pub customer_ratio: f64,
    pub m_b: f64,
    pub c_b: f64,
}

impl RatioState {
    fn add(&self, d: &RatioState, h: f64) -> RatioState {
        RatioState {
            merchant_ratio: self.merchant_ratio + h * d.merchant_ratio,
            customer_ratio: self.customer_ratio + h * d.customer_ratio,
            m_b: self.m_b + h * d.m_b,
            c_b: self.c_b + h * d.c_b,
        }
    }
}

fn derivative(s: &RatioState, p: &NetworkParams) -> Result<RatioState, EconError> {
    if !(s.m_b > 0.0 && s.c_b > 0.0 && s.merchant_ratio >= 0.0 && s.customer_ratio >= 0.0) {
        return Err(EconError::DegenerateRatio);
    }
    let cb = s.customer_ratio.powf(p.beta);
    let ma = s.merchant_ratio.powf(p.alpha);
    Ok(RatioState {
        merchant_ratio: (1.0 - p.lambda) * (cb - s.merchant_ratio) / ((1.0 + cb) * s.m_b),
        customer_ratio: p.lambda * (ma - s.customer_ratio) / ((1.0 + ma) * s.c_b),
        m_b: (1.0 - p.lambda) / (1.0 + cb),
        c_b: p.lambda / (1.0 + ma),
    })
}

/// One classical Runge-Kutta step.
pub fn ratio_ode_step(state: &RatioState, params: &NetworkParams, dt: f64) -> Result<RatioState, EconError> {
    let k1 = derivative(state, params)?;
    if dt == 0.0 {
        return Ok(*state);
    }
    let k2 = derivative(&state.add(&k1, dt / 2.0), params)?;
    let k3 = derivative(&state.add(&k2, dt / 2.0), params)?;
    let k4 = derivative(&state.add(&k3, dt), params)?;
    let sum = RatioState {
        merchant_ratio: k1.merchant_ratio + 2.0 * k2.merchant_ratio + 2.0 * k3.merchant_ratio + k4.merchant_ratio,
        customer_ratio: k1.customer_ratio + 2.0 * k2.customer_ratio + 2.0 * k3.customer_ratio + k4.customer_ratio,
        m_b: k1.m_b + 2.0 * k2.m_b + 2.0 * k3.m_b + k4.m_b,
        c_b: k1.c_b + 2.0 * k2.c_b + 2.0 * k3.c_b + k4.c_b,
    };
    Ok(state.add(&sum, dt / 6.0))
}

pub fn integrate_ratios(
    state: &RatioState,
    params: &NetworkParams,
    t_end: f64,
    dt: f64,
) -> Result<RatioState, EconError> {
    if !(dt > 0.0) {
        return Err(EconError::DomainError("step must be positive".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let mut s = *state;
    for _ in 0..steps {
        s = ratio_ode_step(&s, params, dt)?;
    }
    Ok(s)
}

/// Joins observed over a short window during which counts stayed fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticityObservation {
    pub counts: NetworkState,
    pub customer_joins_a: u64,
    pub customer_joins_b: u64,
    pub merchant_joins_a: u64,
    pub merchant_joins_b: u64,
}

fn logit_ratio(joins_a: u64, joins_b: u64, count_a: u64, count_b: u64) -> Result<f64, EconError> {
    let den = (count_a as f64).ln() - (count_b as f64).ln();
    if den == 0.0 || !den.is_finite() {
        return Err(EconError::IndistinguishableNetworks);
    }
    if joins_a == 0 || joins_b == 0 {
        return Err(EconError::DegenerateShare);
    }
    let share = joins_a as f64 / (joins_a + joins_b) as f64;
    Ok((share.ln() - (-share).ln_1p()) / den)
}

/// `(alpha, beta)` from the log-odds of observed join shares.
pub fn estimate_elasticities(obs: &ElasticityObservation) -> Result<(f64, f64), EconError> {
    let c = &obs.counts;
    let alpha = logit_ratio(obs.customer_joins_a, obs.customer_joins_b, c.m_a, c.m_b)?;
    let beta = logit_ratio(obs.merchant_joins_a, obs.merchant_joins_b, c.c_a, c.c_b)?;
    Ok((alpha, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvertakeReport {
    pub steps_needed: f64,
    pub condition_holds: bool,
}

/// Steps for an entrant to pass an incumbent with `m_incumbent` merchants,
/// and whether the expected customer gap exceeds it.
pub fn overtake_analysis(m_incumbent: u64, lambda: f64, expected_c_new: f64, expected_c_old: f64) -> OvertakeReport {
    let steps_needed = if lambda >= 1.0 { f64::INFINITY } else { (m_incumbent as f64 + 1.0) / (1.0 - lambda) };
    OvertakeReport { steps_needed, condition_holds: expected_c_new - expected_c_old > steps_needed }
}
