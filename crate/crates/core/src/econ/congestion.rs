//! Miners choosing among puzzles (and edge servers) as a congestion game.

use serde::{Deserialize, Serialize};

use super::EconError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionInstance {
    /// Solve rate `mu[k][m]` for puzzle `k` on server `m`.
    pub mu: Vec<Vec<f64>>,
    /// Mining cost `gamma[k][m]`.
    pub gamma: Vec<Vec<f64>>,
    /// Miner count.
    pub n: usize,
    /// Round deadline.
    pub t: f64,
}

impl CongestionInstance {
    /// Single-server instance.
    pub fn single(mu: &[f64], gamma: &[f64], n: usize, t: f64) -> Self {
        CongestionInstance {
            mu: mu.iter().map(|&v| vec![v]).collect(),
            gamma: gamma.iter().map(|&v| vec![v]).collect(),
            n,
            t,
        }
    }

    pub fn puzzles(&self) -> usize {
        self.mu.len()
    }

    pub fn servers(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), EconError> {
        let bad = |m: &str| Err(EconError::InvalidInstance(m.into()));
        if self.mu.is_empty() || self.servers() == 0 {
            return bad("need at least one puzzle and one server");
        }
        if self.gamma.len() != self.mu.len() || self.mu.iter().chain(&self.gamma).any(|row| row.len() != self.servers())
        {
            return bad("mu and gamma must both be K x M");
        }
        if self.mu.iter().chain(&self.gamma).flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("mu and gamma must be finite and non-negative");
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return bad("deadline must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    /// Miners `l[k][m]` on puzzle `k` at server `m`.
    pub l: Vec<Vec<usize>>,
}

impl Allocation {
    pub fn empty(inst: &CongestionInstance) -> Self {
        Allocation { l: vec![vec![0; inst.servers()]; inst.puzzles()] }
    }

    /// Single-server allocation from per-puzzle loads.
    pub fn loads(loads: &[usize]) -> Self {
        Allocation { l: loads.iter().map(|&v| vec![v]).collect() }
    }

    pub fn puzzle_load(&self, k: usize) -> usize {
        self.l[k].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.l.iter().flatten().sum()
    }
}

/// Probability that one of `l` miners at rate `mu` is first to solve the
/// puzzle before `t`: `(1 − e^{−t·mu·l}) / l`.
pub fn puzzle_win_prob(l: usize, mu: f64, t: f64) -> Result<f64, EconError> {
    if l == 0 {
        return Err(EconError::ZeroMiners);
    }
    let l = l as f64;
    Ok(-(-t * mu * l).exp_m1() / l)
}

/// Win probability of a miner on puzzle `k` at server `m` given all loads.
fn win_prob_at(inst: &CongestionInstance, alloc: &Allocation, k: usize, m: usize) -> f64 {
    if alloc.l[k][m] == 0 {
        return 0.0;
    }
    let eta: f64 = (0..inst.servers()).map(|j| alloc.l[k][j] as f64 * inst.mu[k][j]).sum();
    if eta == 0.0 {
        return 0.0;
    }
    let q = -(-inst.t * eta).exp_m1();
    q * inst.mu[k][m] / eta
}

/// `max(p − γ, 0)` for a miner on puzzle `k` at server `m`.
pub fn miner_utility(inst: &CongestionInstance, alloc: &Allocation, k: usize, m: usize) -> Result<f64, EconError> {
    if alloc.l[k][m] == 0 {
        return Err(EconError::ZeroMiners);
    }
    Ok((win_prob_at(inst, alloc, k, m) - inst.gamma[k][m]).max(0.0))
}

fn single_server(inst: &CongestionInstance) -> Result<(), EconError> {
    inst.validate()?;
    if inst.servers() != 1 {
        return Err(EconError::InvalidInstance("the potential is defined for a single server".into()));
    }
    Ok(())
}

/// Marginal potential of the `l`-th miner on puzzle `k`.
fn marginal(inst: &CongestionInstance, k: usize, l: usize) -> f64 {
    puzzle_win_prob(l, inst.mu[k][0], inst.t).expect("l >= 1") - inst.gamma[k][0]
}

/// `Σ_k Σ_{l=1}^{l_k} (p_k(l) − γ_k)`.
pub fn potential(inst: &CongestionInstance, alloc: &Allocation) -> Result<f64, EconError> {
    single_server(inst)?;
    Ok((0..inst.puzzles()).map(|k| (1..=alloc.l[k][0]).map(|l| marginal(inst, k, l)).sum::<f64>()).sum())
}

/// A single miner's move. `None` means not mining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub from: Option<usize>,
    pub to: Option<usize>,
    /// Change in the mover's raw `p − γ` utility.
    pub delta: f64,
}

/// Every unilateral move available in a single-server allocation.
pub fn congestion_deviations(inst: &CongestionInstance, alloc: &Allocation) -> Result<Vec<Deviation>, EconError> {
    single_server(inst)?;
    let k_count = inst.puzzles();
    let current = |k: usize| marginal(inst, k, alloc.l[k][0]);
    let joined = |k: usize, from: Option<usize>| {
        let extra = if from == Some(k) { 0 } else { 1 };
        marginal(inst, k, alloc.l[k][0] + extra)
    };
    let mut out = Vec::new();
    for from in 0..k_count {
        if alloc.l[from][0] == 0 {
            continue;
        }
        out.push(Deviation { from: Some(from), to: None, delta: -current(from) });
        for to in (0..k_count).filter(|&to| to != from) {
            out.push(Deviation { from: Some(from), to: Some(to), delta: joined(to, Some(from)) - current(from) });
        }
    }
    if alloc.total() < inst.n {
        for to in 0..k_count {
            out.push(Deviation { from: None, to: Some(to), delta: joined(to, None) });
        }
    }
    Ok(out)
}

const NASH_TOL: f64 = 1e-12;

pub fn is_congestion_nash(inst: &CongestionInstance, alloc: &Allocation) -> Result<bool, EconError> {
    Ok(congestion_deviations(inst, alloc)?.iter().all(|d| d.delta <= NASH_TOL))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionSolution {
    pub allocation: Allocation,
    pub potential: f64,
    pub direction: Direction,
    /// Every unilateral deviation with its utility change, all `≤ 0`.
    pub certificate: Vec<Deviation>,
}

/// Greedy fill by largest marginal; exact because each puzzle's marginal
/// potential decreases in its load.
fn maximize(inst: &CongestionInstance) -> Allocation {
    let mut loads = vec![0usize; inst.puzzles()];
    for _ in 0..inst.n {
        let best = (0..inst.puzzles())
            .map(|k| (k, marginal(inst, k, loads[k] + 1)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((k, gain)) if gain > 0.0 => loads[k] += 1,
            _ => break,
        }
    }
    Allocation::loads(&loads)
}

/// A sum of concave functions attains its minimum at a vertex of the
/// feasible region: nobody mining, or everyone on a single puzzle.
fn minimize(inst: &CongestionInstance) -> Allocation {
    let mut best = Allocation::empty(inst);
    let mut best_phi = 0.0;
    for k in 0..inst.puzzles() {
        let mut loads = vec![0; inst.puzzles()];
        loads[k] = inst.n;
        let a = Allocation::loads(&loads);
        let phi = potential(inst, &a).expect("validated");
        if phi < best_phi {
            best = a;
            best_phi = phi;
        }
    }
    best
}

/// Optimizes the potential and certifies the result. The minimizer is
/// tried first; if it admits a profitable deviation the maximizer is used.
pub fn solve_congestion_nash(inst: &CongestionInstance) -> Result<CongestionSolution, EconError> {
    single_server(inst)?;
    for (direction, allocation) in [(Direction::Minimize, minimize(inst)), (Direction::Maximize, maximize(inst))] {
        let certificate = congestion_deviations(inst, &allocation)?;
        if certificate.iter().all(|d| d.delta <= NASH_TOL) {
            let potential = potential(inst, &allocation)?;
            return Ok(CongestionSolution { allocation, potential, direction, certificate });
        }
    }
    unreachable!("the potential maximizer of a finite potential game is an equilibrium")
}

pub fn total_mining_cost(inst: &CongestionInstance, alloc: &Allocation) -> f64 {
    alloc.l.iter().zip(&inst.gamma).flat_map(|(l, g)| l.iter().zip(g)).map(|(&l, &g)| l as f64 * g).sum()
}

const ENUMERATION_LIMIT: usize = 1_000_000;

fn allocation_count(n: usize, k: usize) -> usize {
    // C(n + k, k): loads with total at most n.
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        c = c * (n as u128 + i) / i;
        if c > ENUMERATION_LIMIT as u128 {
            return usize::MAX;
        }
    }
    c as usize
}

fn for_each_allocation(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(left: usize, loads: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if loads.len() == k {
            f(loads);
            return;
        }
        for v in 0..=left {
            loads.push(v);
            rec(left - v, loads, k, f);
            loads.pop();
        }
    }
    rec(n, &mut Vec::with_capacity(k), k, f);
}

/// Worst equilibrium cost over the zero-knowledge identity baseline. All
/// single-server allocations are enumerated and checked for stability.
pub fn price_of_crypto_anarchy(
    inst: &CongestionInstance,
    cost: impl Fn(&Allocation) -> f64,
    zkpoi_cost: f64,
) -> Result<f64, EconError> {
    if !(zkpoi_cost > 0.0) {
        return Err(EconError::DegenerateBaseline);
    }
    single_server(inst)?;
    let count = allocation_count(inst.n, inst.puzzles());
    if count > ENUMERATION_LIMIT {
        return Err(EconError::TooLarge { limit: ENUMERATION_LIMIT, got: count });
    }
    let mut worst = f64::NEG_INFINITY;
    for_each_allocation(inst.n, inst.puzzles(), &mut |loads| {
        let a = Allocation::loads(loads);
        if is_congestion_nash(inst, &a).expect("validated") {
            worst = worst.max(cost(&a));
        }
    });
    Ok(worst / zkpoi_cost)
}
