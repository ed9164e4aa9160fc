//! Epoch simulation for the two incentive-compatible protocols: one with a
//! coordinator that groups miners by the hash of their transaction lists,
//! and one where gossip is acknowledged with signed receipts that later
//! expose miners who took transactions but did no work.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{cooperation_thresholds, payoff_cooperate, payoff_defect, GameParams, Thresholds};
use crate::crypto::{PublicKey, SecretKey, Signature};
use crate::hash::Digest;

pub type TxId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    Honest,
    /// Acknowledges gossip and signs the agreement, but verifies nothing.
    LazyDefector,
    /// Reports a wrong list hash to the coordinator.
    FalseHashReporter,
    /// Does the opposite of what the participation rule prescribes.
    InstructionIgnorer,
}

#[derive(Debug, Clone)]
pub struct Miner {
    pub id: usize,
    pub pseudonym: Digest,
    pub pk: PublicKey,
    sk: SecretKey,
    pub behavior: Behavior,
}

impl Miner {
    /// A miner backed by a registered pseudonym and its key.
    pub fn new(id: usize, pseudonym: Digest, sk: SecretKey, behavior: Behavior) -> Miner {
        Miner { id, pseudonym, pk: sk.public_key(), sk, behavior }
    }
}

pub fn make_population(behaviors: &[Behavior], seed: u64) -> Vec<Miner> {
    behaviors
        .iter()
        .enumerate()
        .map(|(id, &behavior)| {
            let material = Digest::framed(&[b"miner", &seed.to_be_bytes(), &(id as u64).to_be_bytes()]);
            let sk = SecretKey::from_seed(material.as_bytes());
            let pseudonym = Digest::framed(&[b"pseudonym", material.as_bytes()]);
            Miner { id, pseudonym, pk: sk.public_key(), sk, behavior }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardAssignment {
    pub shard_of: Vec<usize>,
    /// Transactions handed to each miner.
    pub tx_lists: Vec<Vec<TxId>>,
}

impl ShardAssignment {
    pub fn members(&self, shard: usize) -> Vec<usize> {
        (0..self.shard_of.len()).filter(|&i| self.shard_of[i] == shard).collect()
    }
}

pub(crate) fn list_hash(list: &[TxId]) -> Digest {
    let bytes: Vec<u8> = list.iter().flat_map(|t| t.to_be_bytes()).collect();
    Digest::framed(&[b"txlist", &bytes])
}

fn tx_hash(tx: TxId) -> Digest {
    Digest::framed(&[b"tx", &tx.to_be_bytes()])
}

fn shard_pool(randomness: &Digest, shard: usize, size: usize) -> Vec<TxId> {
    (0..size)
        .map(|i| {
            let d = Digest::framed(&[
                b"pool",
                randomness.as_bytes(),
                &(shard as u64).to_be_bytes(),
                &(i as u64).to_be_bytes(),
            ]);
            u64::from_be_bytes(d.0[..8].try_into().unwrap())
        })
        .collect()
}

/// Orders miners by `H(randomness ‖ pseudonym ‖ pk)` and deals them out to
/// shards in turn, so shard sizes differ by at most one.
pub fn assign_shards(randomness: &Digest, miners: &[Miner], params: &GameParams) -> ShardAssignment {
    let mut order: Vec<(Digest, usize)> = miners
        .iter()
        .enumerate()
        .map(|(i, m)| (Digest::framed(&[randomness.as_bytes(), m.pseudonym.as_bytes(), &m.pk.0]), i))
        .collect();
    order.sort();
    let mut shard_of = vec![0; miners.len()];
    for (rank, (_, i)) in order.into_iter().enumerate() {
        shard_of[i] = rank % params.k;
    }
    let pools: Vec<Vec<TxId>> = (0..params.k).map(|j| shard_pool(randomness, j, params.txs_per_shard)).collect();
    let tx_lists = shard_of.iter().map(|&j| pools[j].clone()).collect();
    ShardAssignment { shard_of, tx_lists }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Cooperator,
    Defector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerOutcome {
    pub id: usize,
    pub shard: usize,
    pub class: Class,
    pub payoff: f64,
    /// Caught by receipt evidence.
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardOutcome {
    pub shard: usize,
    pub y: Vec<TxId>,
    pub cooperators: Vec<usize>,
    pub defectors: Vec<usize>,
    pub l: usize,
    pub all_defective: bool,
    pub thresholds: Option<Thresholds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochOutcome {
    pub miners: Vec<MinerOutcome>,
    pub shards: Vec<ShardOutcome>,
    /// Block reward and fees paid out, before costs.
    pub total_reward: f64,
}

impl EpochOutcome {
    pub fn payoffs(&self) -> Vec<f64> {
        self.miners.iter().map(|m| m.payoff).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_hash: Digest,
    pub recipient: usize,
    pub signature: Signature,
}

fn receipt_message(randomness: &Digest, tx_hash: &Digest) -> Vec<u8> {
    let mut m = b"zkpoi/receipt/v1".to_vec();
    m.extend_from_slice(randomness.as_bytes());
    m.extend_from_slice(tx_hash.as_bytes());
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GossipTopology {
    Complete,
    Ring,
    /// A ring plus `extra` random chords per miner.
    RandomChords {
        extra: usize,
    },
}

impl GossipTopology {
    /// Adjacency lists over positions `0..n`.
    fn neighbors(&self, n: usize, rng: &mut ChaCha20Rng) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); n];
        let link = |a: usize, b: usize, adj: &mut Vec<BTreeSet<usize>>| {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        };
        match *self {
            GossipTopology::Complete => {
                for a in 0..n {
                    for b in a + 1..n {
                        link(a, b, &mut adj);
                    }
                }
            }
            GossipTopology::Ring | GossipTopology::RandomChords { .. } => {
                for a in 0..n {
                    link(a, (a + 1) % n, &mut adj);
                }
                if let GossipTopology::RandomChords { extra } = *self {
                    for a in 0..n {
                        for _ in 0..extra {
                            let b = rng.gen_range(0..n);
                            link(a, b, &mut adj);
                        }
                    }
                }
            }
        }
        adj
    }
}

/// What the shard settles on before anyone acts.
struct ShardPlan {
    members: Vec<usize>,
    group: Vec<usize>,
    y: Vec<TxId>,
    thresholds: Option<Thresholds>,
}

/// Groups shard members by the list hash each one presents and picks the
/// largest group, ties to the smallest hash. `None` when below quorum.
fn plan_shard(
    params: &GameParams,
    members: Vec<usize>,
    lists: &[Vec<TxId>],
    presented: &[Digest],
) -> Option<ShardPlan> {
    let mut groups: Vec<(Digest, Vec<usize>)> = Vec::new();
    for &i in &members {
        match groups.iter_mut().find(|(h, _)| *h == presented[i]) {
            Some(g) => g.1.push(i),
            None => groups.push((presented[i], vec![i])),
        }
    }
    let (_, group) = groups.into_iter().max_by(|a, b| a.1.len().cmp(&b.1.len()).then_with(|| b.0.cmp(&a.0)))?;
    if group.len() < params.tau || group.is_empty() {
        return None;
    }
    let y = lists[group[0]].clone();
    let thresholds = cooperation_thresholds(params, group.len(), y.len()).ok();
    Some(ShardPlan { members, group, y, thresholds })
}

/// The participation rule a rational miner follows given the published plan.
fn rule_says_cooperate(params: &GameParams, plan: &ShardPlan, miner: usize, x_len: usize) -> bool {
    let in_group = plan.group.contains(&miner);
    match &plan.thresholds {
        Some(t) if in_group => t.cooperates_on_agreed_list(x_len),
        Some(t) => t.cooperates_on_other_list(x_len),
        None => {
            let u = payoff_cooperate(params, plan.group.len(), plan.y.len(), x_len).expect("group is non-empty");
            u >= payoff_defect(params)
        }
    }
}

/// (signs the agreement, actually verifies its transactions)
fn act(behavior: Behavior, rule: bool) -> (bool, bool) {
    match behavior {
        Behavior::Honest | Behavior::FalseHashReporter => (rule, rule),
        Behavior::LazyDefector => (true, false),
        Behavior::InstructionIgnorer => (!rule, !rule),
    }
}

enum Evidence<'a> {
    Coordinator,
    Receipts { topology: GossipTopology, sample_size: usize, rng: &'a mut ChaCha20Rng },
}

fn run_epoch(
    params: &GameParams,
    miners: &[Miner],
    assignment: &ShardAssignment,
    randomness: &Digest,
    mut evidence: Evidence<'_>,
) -> EpochOutcome {
    let lists = &assignment.tx_lists;
    let presented: Vec<Digest> = miners
        .iter()
        .map(|m| {
            let h = list_hash(&lists[m.id]);
            match (&evidence, m.behavior) {
                (Evidence::Coordinator, Behavior::FalseHashReporter) => Digest::framed(&[b"forged", h.as_bytes()]),
                _ => h,
            }
        })
        .collect();

    let mut outcomes: Vec<MinerOutcome> = miners
        .iter()
        .map(|m| MinerOutcome {
            id: m.id,
            shard: assignment.shard_of[m.id],
            class: Class::Defector,
            payoff: payoff_defect(params),
            detected: false,
        })
        .collect();
    let mut shards = Vec::with_capacity(params.k);
    let mut total_reward = 0.0;

    for shard in 0..params.k {
        let members = assignment.members(shard);
        let Some(plan) = plan_shard(params, members.clone(), lists, &presented) else {
            shards.push(ShardOutcome {
                shard,
                y: Vec::new(),
                cooperators: Vec::new(),
                defectors: members,
                l: 0,
                all_defective: true,
                thresholds: None,
            });
            continue;
        };

        let mut signs = BTreeSet::new();
        let mut verified: Vec<BTreeSet<TxId>> = vec![BTreeSet::new(); miners.len()];
        for &i in &plan.members {
            let rule = rule_says_cooperate(params, &plan, i, lists[i].len());
            let (sign, verify) = act(miners[i].behavior, rule);
            if sign {
                signs.insert(i);
            }
            if verify {
                verified[i].extend(lists[i].iter().copied());
            }
        }

        let mut detected = BTreeSet::new();
        if let Evidence::Receipts { topology, sample_size, rng } = &mut evidence {
            let adj = topology.neighbors(plan.members.len(), rng);
            // Gossip: every miner passes its transactions to its neighbours,
            // each delivery acknowledged by the recipient.
            let mut inbox: Vec<Vec<(usize, Receipt)>> = vec![Vec::new(); plan.members.len()];
            for (a, neighbours) in adj.iter().enumerate() {
                let sender = plan.members[a];
                for &b in neighbours {
                    let recipient = &miners[plan.members[b]];
                    for &tx in &lists[sender] {
                        let th = tx_hash(tx);
                        let signature = recipient.sk.sign(&receipt_message(randomness, &th));
                        inbox[a].push((b, Receipt { tx_hash: th, recipient: recipient.id, signature }));
                        if signs.contains(&recipient.id) && act(recipient.behavior, true).1 {
                            verified[recipient.id].insert(tx);
                        }
                    }
                }
            }
            // Each sender forwards a random sample of the receipts it holds
            // from each recipient.
            for (a, receipts) in inbox.into_iter().enumerate() {
                for &b in &adj[a] {
                    let mut from_b: Vec<&Receipt> =
                        receipts.iter().filter(|(r, _)| *r == b).map(|(_, rc)| rc).collect();
                    from_b.shuffle(*rng);
                    for receipt in from_b.into_iter().take(*sample_size) {
                        let recipient = &miners[receipt.recipient];
                        if !recipient.pk.verify(&receipt_message(randomness, &receipt.tx_hash), &receipt.signature) {
                            continue;
                        }
                        let did_work = verified[receipt.recipient].iter().any(|&t| tx_hash(t) == receipt.tx_hash);
                        if signs.contains(&receipt.recipient) && !did_work {
                            detected.insert(receipt.recipient);
                        }
                    }
                }
            }
        }

        let group_signers = plan.group.iter().filter(|i| signs.contains(i)).count();
        if group_signers < params.tau || group_signers == 0 {
            shards.push(ShardOutcome {
                shard,
                y: Vec::new(),
                cooperators: Vec::new(),
                defectors: plan.members.clone(),
                l: 0,
                all_defective: true,
                thresholds: plan.thresholds,
            });
            for &i in &plan.members {
                outcomes[i].detected = detected.contains(&i);
            }
            continue;
        }

        let rewarded: Vec<usize> =
            plan.group.iter().copied().filter(|i| signs.contains(i) && !detected.contains(i)).collect();
        let l = rewarded.len();
        for &i in &plan.members {
            outcomes[i].detected = detected.contains(&i);
        }
        for &i in &rewarded {
            outcomes[i].class = Class::Cooperator;
            outcomes[i].payoff = payoff_cooperate(params, l, plan.y.len(), lists[i].len()).expect("l >= 1");
        }
        if l > 0 {
            total_reward += params.br / params.k as f64 + params.r * plan.y.len() as f64;
        }
        let defectors = plan.members.iter().copied().filter(|i| !rewarded.contains(i)).collect();
        shards.push(ShardOutcome {
            shard,
            y: plan.y,
            cooperators: rewarded,
            defectors,
            l,
            all_defective: l == 0,
            thresholds: plan.thresholds,
        });
    }
    EpochOutcome { miners: outcomes, shards, total_reward }
}

pub fn run_coordinated_protocol(params: &GameParams, miners: &[Miner], epoch_randomness: &Digest) -> EpochOutcome {
    let assignment = assign_shards(epoch_randomness, miners, params);
    run_coordinated_on(params, miners, &assignment, epoch_randomness)
}

/// As [`run_coordinated_protocol`] with an explicit assignment.
pub fn run_coordinated_on(
    params: &GameParams,
    miners: &[Miner],
    assignment: &ShardAssignment,
    epoch_randomness: &Digest,
) -> EpochOutcome {
    run_epoch(params, miners, assignment, epoch_randomness, Evidence::Coordinator)
}

pub fn run_receipt_protocol(
    params: &GameParams,
    miners: &[Miner],
    epoch_randomness: &Digest,
    topology: GossipTopology,
    receipt_sample_size: usize,
) -> EpochOutcome {
    let assignment = assign_shards(epoch_randomness, miners, params);
    run_receipt_on(params, miners, &assignment, epoch_randomness, topology, receipt_sample_size)
}

pub fn run_receipt_on(
    params: &GameParams,
    miners: &[Miner],
    assignment: &ShardAssignment,
    epoch_randomness: &Digest,
    topology: GossipTopology,
    receipt_sample_size: usize,
) -> EpochOutcome {
    let mut rng = ChaCha20Rng::from_seed(Digest::framed(&[b"gossip", epoch_randomness.as_bytes()]).0);
    let evidence = Evidence::Receipts { topology, sample_size: receipt_sample_size, rng: &mut rng };
    run_epoch(params, miners, assignment, epoch_randomness, evidence)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, k: usize, tau: usize) -> GameParams {
        GameParams { k, n, c: 1, tau, r: 1.0, br: 100.0, c_f: 2.0, c_v: 0.1, p: 1.0, txs_per_shard: 10 }
    }

    fn seed(i: u64) -> Digest {
        Digest::framed(&[b"epoch", &i.to_be_bytes()])
    }

    #[test]
    fn balanced_and_deterministic_assignment() {
        let miners = make_population(&[Behavior::Honest; 8], 1);
        let g = params(8, 2, 1);
        let a = assign_shards(&seed(1), &miners, &g);
        assert_eq!(a.members(0).len(), 4);
        assert_eq!(a.members(1).len(), 4);
        assert_eq!(a, assign_shards(&seed(1), &miners, &g));
        let differs = (2..20).any(|s| assign_shards(&seed(s), &miners, &g).shard_of != a.shard_of);
        assert!(differs);

        let g3 = params(10, 3, 1);
        let a3 = assign_shards(&seed(1), &make_population(&[Behavior::Honest; 10], 2), &g3);
        let sizes: Vec<usize> = (0..3).map(|j| a3.members(j).len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn all_honest_everyone_paid_and_protocols_agree() {
        let g = params(8, 2, 3);
        let miners = make_population(&[Behavior::Honest; 8], 3);
        let a = run_coordinated_protocol(&g, &miners, &seed(4));
        let b = run_receipt_protocol(&g, &miners, &seed(4), GossipTopology::Complete, 3);
        let expected = payoff_cooperate(&g, 4, 10, 10).unwrap();
        assert!(a.miners.iter().all(|m| m.payoff == expected && m.class == Class::Cooperator));
        assert_eq!(a.payoffs(), b.payoffs());
        assert!(a.total_reward <= g.br + g.r * 20.0 + 1e-9);
    }

    #[test]
    fn below_quorum_all_defective() {
        let g = params(4, 1, 4);
        let mut behaviors = vec![Behavior::Honest; 4];
        behaviors[0] = Behavior::FalseHashReporter;
        let miners = make_population(&behaviors, 5);
        let out = run_coordinated_protocol(&g, &miners, &seed(1));
        assert!(out.shards[0].all_defective);
        assert!(out.miners.iter().all(|m| m.payoff == -g.p));
    }

    #[test]
    fn false_hash_reporter_is_excluded() {
        let g = params(4, 1, 2);
        let mut behaviors = vec![Behavior::Honest; 4];
        behaviors[2] = Behavior::FalseHashReporter;
        let miners = make_population(&behaviors, 6);
        let out = run_coordinated_protocol(&g, &miners, &seed(2));
        assert_eq!(out.miners[2].payoff, -g.p);
        assert_eq!(out.shards[0].l, 3);
        let share = payoff_cooperate(&g, 3, 10, 10).unwrap();
        for i in [0, 1, 3] {
            assert_eq!(out.miners[i].payoff, share);
        }
    }

    #[test]
    fn lazy_defector_caught_by_receipts() {
        let g = params(5, 1, 2);
        let mut behaviors = vec![Behavior::Honest; 5];
        behaviors[1] = Behavior::LazyDefector;
        let miners = make_population(&behaviors, 7);
        let coordinated = run_coordinated_protocol(&g, &miners, &seed(3));
        // The coordinator cannot tell: the free-rider is paid.
        assert_eq!(coordinated.miners[1].class, Class::Cooperator);

        let out = run_receipt_protocol(&g, &miners, &seed(3), GossipTopology::Ring, 3);
        assert!(out.miners[1].detected);
        assert_eq!(out.miners[1].payoff, -g.p);
        assert_eq!(out.shards[0].l, 4);
        let share = payoff_cooperate(&g, 4, 10, 10).unwrap();
        assert!(share > payoff_cooperate(&g, 5, 10, 10).unwrap());
        assert!(out.miners.iter().filter(|m| m.id != 1).all(|m| m.payoff == share));

        let blind = run_receipt_protocol(&g, &miners, &seed(3), GossipTopology::Ring, 0);
        assert!(!blind.miners[1].detected);
        assert_eq!(blind.miners[1].class, Class::Cooperator);
    }

    #[test]
    fn instruction_ignorer_not_paid() {
        let g = params(4, 1, 2);
        let mut behaviors = vec![Behavior::Honest; 4];
        behaviors[0] = Behavior::InstructionIgnorer;
        let miners = make_population(&behaviors, 8);
        for out in [
            run_coordinated_protocol(&g, &miners, &seed(9)),
            run_receipt_protocol(&g, &miners, &seed(9), GossipTopology::Complete, 3),
        ] {
            assert_eq!(out.miners[0].payoff, -g.p);
            assert_eq!(out.shards[0].l, 3);
        }
    }

    #[test]
    fn reward_never_exceeds_block_plus_fees() {
        for s in 0..20 {
            let g = params(9, 3, 2);
            let behaviors: Vec<Behavior> = (0..9)
                .map(|i| match (i + s) % 4 {
                    0 => Behavior::LazyDefector,
                    1 => Behavior::FalseHashReporter,
                    2 => Behavior::InstructionIgnorer,
                    _ => Behavior::Honest,
                })
                .collect();
            let miners = make_population(&behaviors, s as u64);
            for out in [
                run_coordinated_protocol(&g, &miners, &seed(s as u64)),
                run_receipt_protocol(&g, &miners, &seed(s as u64), GossipTopology::RandomChords { extra: 1 }, 2),
            ] {
                let fees: usize = out.shards.iter().map(|s| s.y.len()).sum();
                assert!(out.total_reward <= g.br + g.r * fees as f64 + 1e-9);
            }
        }
    }
}
