//! Strict dominance, iterated deletion, evolutionary stability, and the
//! choice between uniformly distributed and power-law concentrated rewards.

use serde::{Deserialize, Serialize};

use super::{bisect, EconError};

/// Normal-form game. Dense games store one payoff vector per pure profile;
/// separable games, where a player's payoff ignores everyone else's choice,
/// store one payoff per player and strategy so large populations stay small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub strategies: Vec<Vec<String>>,
    payoffs: Payoffs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Payoffs {
    /// `[profile index][player]`, profile index in mixed radix, player 0 most significant.
    Dense(Vec<Vec<f64>>),
    /// `[player][strategy]`.
    Separable(Vec<Vec<f64>>),
}

const DENSE_LIMIT: usize = 1 << 20;

impl PayoffMatrix {
    pub fn dense(strategies: Vec<Vec<String>>, u: impl Fn(&[usize]) -> Vec<f64>) -> Result<Self, EconError> {
        let mut size: usize = 1;
        for s in &strategies {
            size = size
                .checked_mul(s.len())
                .filter(|&v| v <= DENSE_LIMIT)
                .ok_or(EconError::TooLarge { limit: DENSE_LIMIT, got: usize::MAX })?;
        }
        let mut table = Vec::with_capacity(size);
        let mut profile = vec![0; strategies.len()];
        for idx in 0..size {
            let mut rest = idx;
            for p in (0..strategies.len()).rev() {
                profile[p] = rest % strategies[p].len();
                rest /= strategies[p].len();
            }
            let row = u(&profile);
            if row.len() != strategies.len() || row.iter().any(|v| !v.is_finite()) {
                return Err(EconError::InvalidInstance(
                    "payoff function must return one finite value per player".into(),
                ));
            }
            table.push(row);
        }
        Ok(PayoffMatrix { strategies, payoffs: Payoffs::Dense(table) })
    }

    pub fn separable(strategies: Vec<Vec<String>>, payoffs: Vec<Vec<f64>>) -> Result<Self, EconError> {
        if payoffs.len() != strategies.len()
            || payoffs.iter().zip(&strategies).any(|(u, s)| u.len() != s.len() || u.iter().any(|v| !v.is_finite()))
        {
            return Err(EconError::InvalidInstance("one finite payoff per player and strategy".into()));
        }
        Ok(PayoffMatrix { strategies, payoffs: Payoffs::Separable(payoffs) })
    }

    pub fn players(&self) -> usize {
        self.strategies.len()
    }

    pub fn payoff(&self, player: usize, profile: &[usize]) -> f64 {
        match &self.payoffs {
            Payoffs::Separable(u) => u[player][profile[player]],
            Payoffs::Dense(table) => {
                let idx = profile.iter().zip(&self.strategies).fold(0, |acc, (&s, all)| acc * all.len() + s);
                table[idx][player]
            }
        }
    }

    /// Whether `a` strictly beats `b` for `player` against every opponent
    /// profile drawn from `remaining`.
    fn strictly_dominates(&self, player: usize, a: usize, b: usize, remaining: &[Vec<usize>]) -> bool {
        match &self.payoffs {
            Payoffs::Separable(u) => u[player][a] > u[player][b],
            Payoffs::Dense(_) => {
                let mut profile: Vec<usize> = remaining.iter().map(|r| r[0]).collect();
                let mut cursor = vec![0usize; remaining.len()];
                loop {
                    profile[player] = a;
                    let ua = self.payoff(player, &profile);
                    profile[player] = b;
                    if ua <= self.payoff(player, &profile) {
                        return false;
                    }
                    // Next opponent profile.
                    let mut p = remaining.len();
                    loop {
                        if p == 0 {
                            return true;
                        }
                        p -= 1;
                        if p == player {
                            continue;
                        }
                        cursor[p] += 1;
                        if cursor[p] < remaining[p].len() {
                            profile[p] = remaining[p][cursor[p]];
                            break;
                        }
                        cursor[p] = 0;
                        profile[p] = remaining[p][0];
                    }
                }
            }
        }
    }

    /// No player gains by a unilateral switch.
    pub fn is_nash(&self, profile: &[usize]) -> bool {
        let mut scratch = profile.to_vec();
        (0..self.players()).all(|i| {
            let base = self.payoff(i, profile);
            let ok = (0..self.strategies[i].len()).all(|s| {
                scratch[i] = s;
                self.payoff(i, &scratch) <= base
            });
            scratch[i] = profile[i];
            ok
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Elimination {
    pub round: usize,
    pub player: usize,
    pub strategy: String,
    pub dominated_by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsdsResult {
    /// Surviving strategy indices per player.
    pub surviving: Vec<Vec<usize>>,
    pub trace: Vec<Elimination>,
    /// Set when exactly one profile survives.
    pub unique_profile: Option<Vec<usize>>,
    /// The unique survivor is a profile of strictly dominant strategies.
    pub dominant_strategy_equilibrium: bool,
    /// The unique survivor passes the unilateral-deviation check.
    pub nash: bool,
}

pub fn idsds(matrix: &PayoffMatrix) -> IdsdsResult {
    let mut remaining: Vec<Vec<usize>> = matrix.strategies.iter().map(|s| (0..s.len()).collect()).collect();
    let mut trace = Vec::new();
    for round in 1.. {
        let mut removals: Vec<(usize, usize, usize)> = Vec::new();
        for player in 0..matrix.players() {
            for &b in &remaining[player] {
                if let Some(&a) =
                    remaining[player].iter().find(|&&a| a != b && matrix.strictly_dominates(player, a, b, &remaining))
                {
                    removals.push((player, b, a));
                }
            }
        }
        if removals.is_empty() {
            break;
        }
        for (player, b, a) in removals {
            remaining[player].retain(|&s| s != b);
            trace.push(Elimination {
                round,
                player,
                strategy: matrix.strategies[player][b].clone(),
                dominated_by: matrix.strategies[player][a].clone(),
            });
        }
    }
    let unique_profile: Option<Vec<usize>> =
        remaining.iter().all(|r| r.len() == 1).then(|| remaining.iter().map(|r| r[0]).collect());
    let (dominant, nash) = match &unique_profile {
        Some(profile) => {
            let full: Vec<Vec<usize>> = matrix.strategies.iter().map(|s| (0..s.len()).collect()).collect();
            let dominant = (0..matrix.players()).all(|i| {
                (0..matrix.strategies[i].len())
                    .all(|s| s == profile[i] || matrix.strictly_dominates(i, profile[i], s, &full))
            });
            (dominant, matrix.is_nash(profile))
        }
        None => (false, false),
    };
    IdsdsResult { surviving: remaining, trace, unique_profile, dominant_strategy_equilibrium: dominant, nash }
}

/// Symmetric two-strategy game; `payoff[a][b]` is what strategy `a` earns
/// against `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricGame {
    pub payoff: [[f64; 2]; 2],
}

impl SymmetricGame {
    fn mixed(&self, a: usize, star: usize, eps: f64) -> f64 {
        let other = 1 - star;
        (1.0 - eps) * self.payoff[a][star] + eps * self.payoff[a][other]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EssCondition {
    /// `u(s*,s*) > u(s',s*)`.
    StrictNash,
    /// `u(s*,s*) = u(s',s*)` and `u(s*,s') > u(s',s')`.
    StableAgainstMutants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub candidate: usize,
    pub condition: Option<EssCondition>,
    /// The invasion inequality held at every grid point `ε ∈ [10^-3, ε0]`.
    pub mixture_holds: bool,
    pub is_ess: bool,
    /// Best response to itself.
    pub nash: bool,
}

const ESS_EPS0: f64 = 0.1;
const ESS_GRID: usize = 25;
const ESS_TIE: f64 = 1e-12;

pub fn is_ess(game: &SymmetricGame, candidate: usize) -> EssReport {
    assert!(candidate < 2, "two-strategy game");
    let (s, m) = (candidate, 1 - candidate);
    let u = &game.payoff;
    let tie = (u[s][s] - u[m][s]).abs() <= ESS_TIE * u[s][s].abs().max(1.0);
    let condition = if u[s][s] > u[m][s] && !tie {
        Some(EssCondition::StrictNash)
    } else if tie && u[s][m] > u[m][m] {
        Some(EssCondition::StableAgainstMutants)
    } else {
        None
    };
    let mixture_holds = (0..ESS_GRID).all(|i| {
        let eps = 1e-3 * (ESS_EPS0 / 1e-3).powf(i as f64 / (ESS_GRID - 1) as f64);
        game.mixed(s, s, eps) > game.mixed(m, s, eps)
    });
    EssReport { candidate, condition, mixture_holds, is_ess: condition.is_some(), nash: u[s][s] >= u[m][s] }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ShareModel {
    Uniform,
    /// Equal power, a single winner per round; shares are expectations.
    WinnerTakeAll,
    /// Share of the `i`-th largest miner proportional to `i^-exponent`.
    Zipf {
        exponent: f64,
    },
    /// Zipf with the exponent chosen so the `top` largest miners hold `mass`.
    ZipfCalibrated {
        top: usize,
        mass: f64,
    },
}

impl ShareModel {
    pub fn shares(&self, n: usize) -> Result<Vec<f64>, EconError> {
        match *self {
            ShareModel::Uniform | ShareModel::WinnerTakeAll => Ok(vec![1.0 / n as f64; n]),
            ShareModel::Zipf { exponent } => Ok(zipf(n, exponent)),
            ShareModel::ZipfCalibrated { top, mass } => Ok(zipf(n, calibrate_zipf_exponent(n, top, mass)?)),
        }
    }
}

fn zipf(n: usize, s: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-s)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Exponent under which the `top` largest of `n` Zipf shares sum to `mass`.
pub fn calibrate_zipf_exponent(n: usize, top: usize, mass: f64) -> Result<f64, EconError> {
    if top == 0 || top >= n || !(mass > top as f64 / n as f64 && mass < 1.0) {
        return Err(EconError::DomainError("need 0 < top < n and top/n < mass < 1".into()));
    }
    let top_mass = |s: f64| zipf(n, s)[..top].iter().sum::<f64>() - mass;
    bisect(0.0, 20.0, 1e-12, top_mass).ok_or_else(|| EconError::DomainError("mass not reachable".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PowCost {
    /// The same cost for every miner.
    Fixed { cost: f64 },
    /// Each miner spends `kappa` of its expected revenue; `kappa = 1` is full
    /// rent dissipation under free entry.
    Proportional { kappa: f64 },
}

impl Default for PowCost {
    fn default() -> Self {
        PowCost::Proportional { kappa: 1.0 }
    }
}

pub const UDCE: usize = 0;
pub const PLFC: usize = 1;

/// Each miner picks the uniformly distributed currency (reward `R/N` at
/// cost `udce_cost`) or the concentrated one (expected `R·share_i` minus
/// its proof-of-work cost). Payoffs do not depend on other miners.
pub fn udce_vs_plfc_game(
    miners: usize,
    pow_cost: PowCost,
    reward: f64,
    udce_cost: f64,
    shares: &ShareModel,
) -> Result<PayoffMatrix, EconError> {
    if miners < 2 {
        return Err(EconError::DomainError("need at least two miners".into()));
    }
    let shares = shares.shares(miners)?;
    let uniform = reward / miners as f64 - udce_cost;
    let payoffs = shares
        .iter()
        .map(|&share| {
            let revenue = reward * share;
            let cost = match pow_cost {
                PowCost::Fixed { cost } => cost,
                PowCost::Proportional { kappa } => kappa * revenue,
            };
            vec![uniform, revenue - cost]
        })
        .collect();
    PayoffMatrix::separable(vec![vec!["UDCE".to_string(), "PLFC".to_string()]; miners], payoffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize, labels: &[&str]) -> Vec<Vec<String>> {
        vec![labels.iter().map(|s| s.to_string()).collect(); n]
    }

    #[test]
    fn one_round_elimination() {
        let m = PayoffMatrix::dense(names(2, &["UDCE", "PLFC"]), |p| {
            p.iter().map(|&s| if s == 0 { 5.0 } else { 3.0 }).collect()
        })
        .unwrap();
        let r = idsds(&m);
        assert_eq!(r.unique_profile, Some(vec![0, 0]));
        assert!(r.dominant_strategy_equilibrium && r.nash);
        assert_eq!(r.trace.len(), 2);
        assert!(r.trace.iter().all(|e| e.round == 1 && e.strategy == "PLFC"));
    }

    #[test]
    fn matching_pennies_survives() {
        let m = PayoffMatrix::dense(names(2, &["H", "T"]), |p| {
            let same = if p[0] == p[1] { 1.0 } else { -1.0 };
            vec![same, -same]
        })
        .unwrap();
        let r = idsds(&m);
        assert_eq!(r.surviving, vec![vec![0, 1], vec![0, 1]]);
        assert!(r.trace.is_empty() && r.unique_profile.is_none());
    }

    #[test]
    fn iterated_rounds() {
        // Player 1's R is only dominated once player 0 drops D.
        let table = [[(3.0, 1.0), (0.0, 0.0)], [(1.0, 0.0), (-1.0, 2.0)]];
        let m = PayoffMatrix::dense(vec![vec!["U".into(), "D".into()], vec!["L".into(), "R".into()]], |p| {
            let (a, b) = table[p[0]][p[1]];
            vec![a, b]
        })
        .unwrap();
        let r = idsds(&m);
        assert_eq!(r.unique_profile, Some(vec![0, 0]));
        assert_eq!(r.trace.iter().map(|e| e.round).max(), Some(2));
        assert!(!r.dominant_strategy_equilibrium);
        assert!(r.nash);
    }

    fn sym(aa: f64, ab: f64, ba: f64, bb: f64) -> SymmetricGame {
        SymmetricGame { payoff: [[aa, ab], [ba, bb]] }
    }

    #[test]
    fn ess_cases() {
        let strict = is_ess(&sym(3.0, 0.0, 2.0, 0.0), 0);
        assert_eq!(strict.condition, Some(EssCondition::StrictNash));
        assert!(strict.is_ess && strict.mixture_holds && strict.nash);

        let second = is_ess(&sym(1.0, 2.0, 1.0, 1.0), 0);
        assert_eq!(second.condition, Some(EssCondition::StableAgainstMutants));
        assert!(second.is_ess && second.mixture_holds && second.nash);

        let neutral = is_ess(&sym(1.0, 1.0, 1.0, 1.0), 0);
        assert!(!neutral.is_ess && !neutral.mixture_holds);
    }

    #[test]
    fn zipf_calibration() {
        let s = calibrate_zipf_exponent(1000, 16, 0.9).unwrap();
        let shares = zipf(1000, s);
        assert!((shares[..16].iter().sum::<f64>() - 0.9).abs() < 1e-9);
        assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(shares.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn udce_game_examples() {
        let g = udce_vs_plfc_game(4, PowCost::Fixed { cost: 1.5 }, 4.0, 0.0, &ShareModel::WinnerTakeAll).unwrap();
        for i in 0..4 {
            let mut p = vec![UDCE; 4];
            assert_eq!(g.payoff(i, &p), 1.0);
            p[i] = PLFC;
            assert_eq!(g.payoff(i, &p), 4.0 * 0.25 - 1.5);
        }
        assert_eq!(idsds(&g).unique_profile, Some(vec![UDCE; 4]));

        let tie = udce_vs_plfc_game(4, PowCost::Fixed { cost: 0.0 }, 4.0, 0.0, &ShareModel::Uniform).unwrap();
        assert!(idsds(&tie).trace.is_empty());
        assert!(udce_vs_plfc_game(1, PowCost::default(), 1.0, 0.0, &ShareModel::Uniform).is_err());

        let calibrated = ShareModel::ZipfCalibrated { top: 16, mass: 0.9 };
        let big = udce_vs_plfc_game(1000, PowCost::default(), 1000.0, 0.01, &calibrated).unwrap();
        let r = idsds(&big);
        assert_eq!(r.unique_profile, Some(vec![UDCE; 1000]));
        assert!(r.nash);
    }
}
