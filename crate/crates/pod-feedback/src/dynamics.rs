//! Profit-target bidding dynamics: each round the seller computes feedback
//! under a policy, and agents adjust their profit targets (winners raise
//! targets by their discount, losers lower targets by their raise, with an
//! ε nudge to avoid stalls).

use num::rational::Ratio;
use num::{BigRational, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coalitional::{floor_money, rational, CoalitionalOracle};
use crate::feedback::{bicore_feedback_with, core_both_sides};
use crate::coalitional::vcg_feedback_with;
use crate::model::{
    allocation_value, AgentStatus, Allocation, AuctionInstance, BidProfile, Money,
};
use crate::solver::{classify_agents, solve_constrained, SolveConstraints};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Vcg,
    Core,
    Bicore,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Vcg => "vcg",
            Policy::Core => "core",
            Policy::Bicore => "bicore",
        }
    }
}

/// Per-agent bid increment ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsilonRule {
    /// ε_i = v_i / 10 (at least one micro-unit)
    ValueFraction,
    /// a fixed amount for every agent
    Fixed(Money),
}

#[derive(Debug, Clone)]
pub struct DynamicsConfig {
    pub max_rounds: usize,
    /// converged when the relative change of the total bid < this fraction
    pub convergence_threshold: Ratio<i64>,
    /// cycles only count when the change from the prior round ≥ this fraction
    pub cycle_change_threshold: Ratio<i64>,
    pub epsilon: EpsilonRule,
    /// update all agents at once from the same feedback (default); when
    /// false, agents update one at a time with feedback recomputed per agent
    pub simultaneous: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            max_rounds: 20,
            convergence_threshold: Ratio::new(1, 100),
            cycle_change_threshold: Ratio::new(10, 100),
            epsilon: EpsilonRule::ValueFraction,
            simultaneous: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialTargets {
    /// ρ = 0: everyone starts by bidding full value
    FromValues,
    /// ρ_i uniform in [0, v_i], drawn from the given seed
    RandomTargets(u64),
}

/// Per-agent profit targets; bids are derived as max(v − ρ, 0) per position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicsState {
    pub targets: Vec<Money>,
}

impl DynamicsState {
    pub fn initial(instance: &AuctionInstance, init: InitialTargets) -> Self {
        let targets = match init {
            InitialTargets::FromValues => vec![Money(0); instance.num_agents()],
            InitialTargets::RandomTargets(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                instance
                    .agents
                    .iter()
                    .map(|a| Money(rng.gen_range(0..=a.max_value().micro())))
                    .collect()
            }
        };
        DynamicsState { targets }
    }

    pub fn bids(&self, instance: &AuctionInstance) -> BidProfile {
        instance
            .agents
            .iter()
            .zip(&self.targets)
            .map(|(a, &rho)| {
                a.value
                    .iter()
                    .map(|&v| std::cmp::max(v - rho, Money(0)))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    /// per-agent per-position bids in micro-units
    pub bids: Vec<Vec<i64>>,
    pub statuses: Vec<String>,
    /// feedback floored to micro-units (as applied by the agents)
    pub discounts: Vec<i64>,
    pub raises: Vec<i64>,
    /// Σ_i max_p b_i[p], the scalar used by the termination rules
    pub total_bid: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "matched_round")]
pub enum Outcome {
    Converged,
    Cycled(usize),
    MaxRounds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsTrace {
    pub rounds: Vec<RoundRecord>,
    pub outcome: Outcome,
    /// final round's optimal allocation as (position, agent index) pairs
    pub final_allocation: Vec<(usize, usize)>,
    /// 100 × true value of the final allocation / efficient optimum
    pub efficiency_percent: f64,
}

fn epsilon_of(config: &DynamicsConfig, instance: &AuctionInstance, agent: usize) -> Money {
    match config.epsilon {
        EpsilonRule::ValueFraction => {
            let v = instance.agents[agent].max_value().micro();
            Money(std::cmp::max(v / 10, 1))
        }
        EpsilonRule::Fixed(e) => e,
    }
}

fn clamp_target(rho: Money, v: Money) -> Money {
    std::cmp::min(std::cmp::max(rho, Money(0)), v)
}

/// Feedback for the current bids under a policy, floored to micro-units.
fn policy_feedback(
    instance: &AuctionInstance,
    bids: &BidProfile,
    policy: Policy,
) -> (Vec<AgentStatus>, Vec<Money>, Vec<Money>) {
    let statuses = classify_agents(instance, bids);
    let oracle = CoalitionalOracle::new(instance, bids);
    let fv = match policy {
        Policy::Vcg => vcg_feedback_with(&oracle, &statuses),
        Policy::Core => core_both_sides(instance, &oracle, &statuses),
        Policy::Bicore => {
            // losers already bidding their full value cannot use a shared
            // raise budget; give them priority so their raise saturates
            let saturate: Vec<bool> = statuses
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    *s == AgentStatus::StrictLoser
                        && bids[i] == instance.agents[i].value
                })
                .collect();
            bicore_feedback_with(instance, &oracle, &statuses, Some(&saturate))
        }
    };
    let discounts = fv.discounts.iter().map(floor_money).collect();
    let raises = fv.raises.iter().map(floor_money).collect();
    (statuses, discounts, raises)
}

fn update_target(
    rho: Money,
    v: Money,
    status: AgentStatus,
    pi: Money,
    mu: Money,
    eps: Money,
) -> Money {
    match status {
        AgentStatus::StrictWinner => clamp_target(rho + pi - eps, v),
        AgentStatus::StrictLoser => clamp_target(rho - mu - eps, v),
        // tied agents shave their target to try to win outright
        AgentStatus::Tied => clamp_target(rho - eps, v),
    }
}

/// One round of updates. Returns the new state plus the feedback record for
/// the pre-step bids.
pub fn step(
    instance: &AuctionInstance,
    state: &DynamicsState,
    policy: Policy,
    config: &DynamicsConfig,
) -> (DynamicsState, Vec<AgentStatus>, Vec<Money>, Vec<Money>) {
    let n = instance.num_agents();
    let mut targets = state.targets.clone();
    if config.simultaneous {
        let bids = state.bids(instance);
        let (statuses, discounts, raises) = policy_feedback(instance, &bids, policy);
        for i in 0..n {
            let eps = epsilon_of(config, instance, i);
            targets[i] = update_target(
                targets[i],
                instance.agents[i].max_value(),
                statuses[i],
                discounts[i],
                raises[i],
                eps,
            );
        }
        (DynamicsState { targets }, statuses, discounts, raises)
    } else {
        let bids = state.bids(instance);
        let (statuses, discounts, raises) = policy_feedback(instance, &bids, policy);
        for i in 0..n {
            let current = DynamicsState {
                targets: targets.clone(),
            };
            let bids_i = current.bids(instance);
            let (st, d, r) = policy_feedback(instance, &bids_i, policy);
            let eps = epsilon_of(config, instance, i);
            targets[i] = update_target(
                targets[i],
                instance.agents[i].max_value(),
                st[i],
                d[i],
                r[i],
                eps,
            );
        }
        (DynamicsState { targets }, statuses, discounts, raises)
    }
}

fn total_bid(bids: &BidProfile) -> Money {
    bids.iter()
        .map(|b| b.iter().copied().max().unwrap_or(Money(0)))
        .sum()
}


fn record(instance: &AuctionInstance, bids: &BidProfile) -> RoundRecord {
    RoundRecord {
        bids: bids
            .iter()
            .map(|b| b.iter().map(|m| m.micro()).collect())
            .collect(),
        statuses: Vec::new(),
        discounts: vec![0; instance.num_agents()],
        raises: vec![0; instance.num_agents()],
        total_bid: total_bid(bids).micro(),
    }
}

/// Run the dynamics until convergence, a detected cycle, or the round cap.
///
/// Convergence: the change of the total bid sum, relative to the previous
/// round's total, is below the threshold (exact rational comparison; a zero
/// previous total requires an unchanged total) *and* every agent keeps the
/// same winner/loser status as in the previous round — a stable sum alone is
/// not convergence while the allocation is still flipping. Cycling: the exact
/// bid profile matches some earlier round other than the immediate prior, and
/// the change from the prior round is at least the cycle threshold.
/// Convergence is checked before cycling.
pub fn run(
    instance: &AuctionInstance,
    policy: Policy,
    config: &DynamicsConfig,
    init: InitialTargets,
) -> DynamicsTrace {
    let mut state = DynamicsState::initial(instance, init);
    let mut history: Vec<BidProfile> = vec![state.bids(instance)];
    let mut rounds = vec![record(instance, &history[0])];
    let mut outcome = Outcome::MaxRounds;

    while rounds.len() < config.max_rounds {
        let (next, statuses, discounts, raises) = step(instance, &state, policy, config);
        // backfill the feedback sent in response to this round's bids
        let last = rounds.last_mut().expect("at least one round");
        last.statuses = statuses.iter().map(|s| format!("{s:?}")).collect();
        last.discounts = discounts.iter().map(|m| m.micro()).collect();
        last.raises = raises.iter().map(|m| m.micro()).collect();

        state = next;
        let bids = state.bids(instance);
        let prev_bids = history.last().expect("nonempty");
        let delta = rational(Money(
            (total_bid(&bids) - total_bid(prev_bids)).micro().abs(),
        ));
        let prev_r = rational(total_bid(prev_bids));
        rounds.push(record(instance, &bids));
        let sum_stable = if prev_r.is_zero() {
            delta.is_zero()
        } else {
            &delta / &prev_r < big(config.convergence_threshold)
        };
        if sum_stable && classify_agents(instance, &bids) == statuses {
            outcome = Outcome::Converged;
            history.push(bids);
            break;
        }
        let big_change = !prev_r.is_zero() && &delta / &prev_r >= big(config.cycle_change_threshold);
        let matched = history[..history.len().saturating_sub(1)]
            .iter()
            .position(|h| *h == bids);
        if let (Some(k), true) = (matched, big_change) {
            outcome = Outcome::Cycled(k + 1);
            history.push(bids);
            break;
        }
        history.push(bids);
    }

    let final_bids = history.last().expect("nonempty").clone();
    let witness = solve_constrained(instance, &final_bids, &SolveConstraints::none())
        .witness()
        .cloned()
        .unwrap_or_default();
    let efficiency = efficiency_of_allocation(instance, &witness);
    DynamicsTrace {
        rounds,
        outcome,
        final_allocation: witness
            .placements
            .iter()
            .map(|(&p, &a)| (p, a))
            .collect(),
        efficiency_percent: efficiency,
    }
}

fn big(r: Ratio<i64>) -> BigRational {
    BigRational::new((*r.numer()).into(), (*r.denom()).into())
}

/// 100 × true value of the allocation / efficient optimum under true values.
pub fn efficiency_of_allocation(instance: &AuctionInstance, alloc: &Allocation) -> f64 {
    let values = instance.value_profile();
    let achieved = allocation_value(instance, &values, alloc)
        .expect("solver allocations are feasible");
    let best = solve_constrained(instance, &values, &SolveConstraints::none())
        .value()
        .expect("unconstrained solve is feasible");
    if best == Money(0) {
        100.0
    } else {
        100.0 * achieved.micro() as f64 / best.micro() as f64
    }
}
