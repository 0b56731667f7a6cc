//! Core and bicore feedback policies, plus membership checks for the joint
//! discount/raise polytope.

use num::{BigRational, Signed, Zero};

use crate::coalitional::{
    rational, CoalitionalOracle, CoalitionalValue, FeedbackVector,
};
use crate::lp::{leximin_stages, Rational};
use crate::model::{AgentStatus, AuctionInstance, BidProfile, Money};
use crate::solver::{classify_agents, enumerate_feasible_allocations, mask_of, SolveError};

/// Which side of the market a one-sided core policy serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoreSide {
    Winners,
    Losers,
}

/// Retained inequalities Σ_{i∈S} π_i + Σ_{i∈T} μ_i ≤ rhs over subsets of
/// strict winners and strict losers. Pairs whose constrained solve is
/// infeasible impose no bound and are omitted, as is the trivial (∅,∅).
#[derive(Debug, Clone)]
pub struct BicoreConstraintSet {
    pub pairs: Vec<(u32, u32, Money)>,
}

/// Maps LP variables to agents: winner discount variables first, then loser
/// raise variables.
#[derive(Debug, Clone)]
pub struct VarLayout {
    pub winners: Vec<usize>,
    pub losers: Vec<usize>,
}

impl VarLayout {
    pub fn from_statuses(statuses: &[AgentStatus]) -> Self {
        let winners = statuses
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == AgentStatus::StrictWinner)
            .map(|(i, _)| i)
            .collect();
        let losers = statuses
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == AgentStatus::StrictLoser)
            .map(|(i, _)| i)
            .collect();
        VarLayout { winners, losers }
    }

    pub fn nvars(&self) -> usize {
        self.winners.len() + self.losers.len()
    }

    fn vector_from_point(&self, n: usize, point: &[Rational], grand: Money) -> FeedbackVector {
        let mut fv = FeedbackVector::zeros(n, grand);
        for (k, &agent) in self.winners.iter().enumerate() {
            fv.discounts[agent] = point[k].clone();
        }
        for (k, &agent) in self.losers.iter().enumerate() {
            fv.raises[agent] = point[self.winners.len() + k].clone();
        }
        fv
    }
}

/// Enumerate the joint constraint set: for each S ⊆ strict winners and
/// T ⊆ strict losers (not both empty), the bound is the loss in attainable
/// value when S is removed and T must be served.
pub fn bicore_constraints(
    oracle: &CoalitionalOracle,
    layout: &VarLayout,
) -> BicoreConstraintSet {
    let grand = oracle.grand_value();
    let w_mask = mask_of(&layout.winners);
    let l_mask = mask_of(&layout.losers);
    let mut pairs = Vec::new();
    let mut s = w_mask;
    loop {
        let mut t = l_mask;
        loop {
            if (s, t) != (0, 0) {
                let without = oracle.full_mask() & !s;
                if let CoalitionalValue::Finite(v) = oracle.value_bi(without, t) {
                    pairs.push((s, t, grand - v));
                }
            }
            if t == 0 {
                break;
            }
            t = (t - 1) & l_mask;
        }
        if s == 0 {
            break;
        }
        s = (s - 1) & w_mask;
    }
    BicoreConstraintSet { pairs }
}

fn lp_rows(set: &BicoreConstraintSet, layout: &VarLayout) -> Vec<(Vec<Rational>, Rational)> {
    set.pairs
        .iter()
        .map(|&(s, t, rhs)| {
            let mut a = vec![Rational::zero(); layout.nvars()];
            for (k, &agent) in layout.winners.iter().enumerate() {
                if s & (1 << agent) != 0 {
                    a[k] = Rational::from_integer(1.into());
                }
            }
            for (k, &agent) in layout.losers.iter().enumerate() {
                if t & (1 << agent) != 0 {
                    a[layout.winners.len() + k] = Rational::from_integer(1.into());
                }
            }
            (a, rational(rhs))
        })
        .collect()
}

/// One-sided core policy: leximin-maximal discounts over the winners' core,
/// or leximin-maximal raises over the losers' core.
pub fn core_feedback(
    instance: &AuctionInstance,
    bids: &BidProfile,
    side: CoreSide,
) -> FeedbackVector {
    let statuses = classify_agents(instance, bids);
    let oracle = CoalitionalOracle::new(instance, bids);
    core_feedback_with(instance, &oracle, &statuses, side)
}

pub fn core_feedback_with(
    instance: &AuctionInstance,
    oracle: &CoalitionalOracle,
    statuses: &[AgentStatus],
    side: CoreSide,
) -> FeedbackVector {
    let n = instance.agents.len();
    let full_layout = VarLayout::from_statuses(statuses);
    let layout = match side {
        CoreSide::Winners => VarLayout {
            winners: full_layout.winners,
            losers: Vec::new(),
        },
        CoreSide::Losers => VarLayout {
            winners: Vec::new(),
            losers: full_layout.losers,
        },
    };
    if layout.nvars() == 0 {
        return FeedbackVector::zeros(n, oracle.grand_value());
    }
    let set = bicore_constraints(oracle, &layout);
    let rows = lp_rows(&set, &layout);
    let stage: Vec<usize> = (0..layout.nvars()).collect();
    let point = leximin_stages(&rows, layout.nvars(), &[stage])
        .expect("core polytope is nonempty and bounded");
    let mut fv = layout.vector_from_point(n, &point, oracle.grand_value());
    fv.seller_payoff = rational(oracle.grand_value()) - fv.discounts.iter().sum::<BigRational>();
    fv
}

/// Two-sided core policy used by the dynamics: winners' core discounts and
/// losers' core raises computed independently.
pub fn core_both_sides(
    instance: &AuctionInstance,
    oracle: &CoalitionalOracle,
    statuses: &[AgentStatus],
) -> FeedbackVector {
    let w = core_feedback_with(instance, oracle, statuses, CoreSide::Winners);
    let l = core_feedback_with(instance, oracle, statuses, CoreSide::Losers);
    FeedbackVector {
        discounts: w.discounts,
        raises: l.raises,
        seller_payoff: w.seller_payoff,
    }
}

/// Bicore policy: leximin-maximal joint (π, μ) over the full constraint set.
pub fn bicore_feedback(instance: &AuctionInstance, bids: &BidProfile) -> FeedbackVector {
    let statuses = classify_agents(instance, bids);
    let oracle = CoalitionalOracle::new(instance, bids);
    bicore_feedback_with(instance, &oracle, &statuses, None)
}

/// Bicore policy with optional priority saturation: raise variables of agents
/// flagged in `saturate` are maximized (leximin among themselves) before the
/// remaining variables. Used by the dynamics for losers whose bid already
/// equals their value and who therefore cannot act on a shared raise budget.
pub fn bicore_feedback_with(
    instance: &AuctionInstance,
    oracle: &CoalitionalOracle,
    statuses: &[AgentStatus],
    saturate: Option<&[bool]>,
) -> FeedbackVector {
    let n = instance.agents.len();
    let layout = VarLayout::from_statuses(statuses);
    if layout.nvars() == 0 {
        return FeedbackVector::zeros(n, oracle.grand_value());
    }
    let set = bicore_constraints(oracle, &layout);
    let rows = lp_rows(&set, &layout);
    let stages: Vec<Vec<usize>> = match saturate {
        Some(flags) => {
            let first: Vec<usize> = layout
                .losers
                .iter()
                .enumerate()
                .filter(|(_, &agent)| flags[agent])
                .map(|(k, _)| layout.winners.len() + k)
                .collect();
            let rest: Vec<usize> = (0..layout.nvars()).filter(|v| !first.contains(v)).collect();
            vec![first, rest]
        }
        None => vec![(0..layout.nvars()).collect()],
    };
    let point = leximin_stages(&rows, layout.nvars(), &stages)
        .expect("bicore polytope is nonempty and bounded");
    let mut fv = layout.vector_from_point(n, &point, oracle.grand_value());
    fv.seller_payoff = rational(oracle.grand_value()) - fv.discounts.iter().sum::<BigRational>();
    fv
}

/// Validity of a feedback vector: nonnegative components, winners receive no
/// raise, losers no discount, tied agents nothing.
pub fn is_valid_feedback(statuses: &[AgentStatus], fv: &FeedbackVector) -> bool {
    statuses.iter().enumerate().all(|(i, s)| {
        let pi = &fv.discounts[i];
        let mu = &fv.raises[i];
        if pi.is_negative() || mu.is_negative() {
            return false;
        }
        match s {
            AgentStatus::StrictWinner => mu.is_zero(),
            AgentStatus::StrictLoser => pi.is_zero(),
            AgentStatus::Tied => pi.is_zero() && mu.is_zero(),
        }
    })
}

/// Polytope membership by direct inequality checks (exact arithmetic).
pub fn bicore_membership(
    instance: &AuctionInstance,
    bids: &BidProfile,
    fv: &FeedbackVector,
) -> bool {
    let statuses = classify_agents(instance, bids);
    if !is_valid_feedback(&statuses, fv) {
        return false;
    }
    let oracle = CoalitionalOracle::new(instance, bids);
    let layout = VarLayout::from_statuses(&statuses);
    let set = bicore_constraints(&oracle, &layout);
    set.pairs.iter().all(|&(s, t, rhs)| {
        let mut lhs = Rational::zero();
        for i in 0..instance.agents.len() {
            if s & (1 << i) != 0 {
                lhs += &fv.discounts[i];
            }
            if t & (1 << i) != 0 {
                lhs += &fv.raises[i];
            }
        }
        lhs <= rational(rhs)
    })
}

/// Exhaustive check: for every subset of supported discounts and raises,
/// apply the corresponding bid updates and verify that every allocation that
/// was optimal under the original bids remains optimal. Exponential; guarded
/// by the solver's size limits.
pub fn bicore_membership_oracle(
    instance: &AuctionInstance,
    bids: &BidProfile,
    fv: &FeedbackVector,
) -> Result<bool, SolveError> {
    let statuses = classify_agents(instance, bids);
    if !is_valid_feedback(&statuses, fv) {
        return Ok(false);
    }
    let n = instance.agents.len();
    let allocations = enumerate_feasible_allocations(instance)?;
    let original: Vec<Rational> = allocations
        .iter()
        .map(|a| {
            a.placements
                .iter()
                .map(|(&pos, &agent)| rational(bids[agent][pos]))
                .sum()
        })
        .collect();
    let best = original.iter().cloned().max().unwrap_or_else(Rational::zero);
    let optimal_idx: Vec<usize> = original
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == best)
        .map(|(i, _)| i)
        .collect();

    let pi_support: Vec<usize> = (0..n).filter(|&i| !fv.discounts[i].is_zero()).collect();
    let mu_support: Vec<usize> = (0..n).filter(|&i| !fv.raises[i].is_zero()).collect();

    for s_bits in 0u32..(1 << pi_support.len()) {
        for t_bits in 0u32..(1 << mu_support.len()) {
            // rational updated bid for agent i at position p
            let updated = |agent: usize, pos: usize| -> Rational {
                let base = rational(bids[agent][pos]);
                if let Some(k) = pi_support.iter().position(|&a| a == agent) {
                    if s_bits & (1 << k) != 0 {
                        let d = &base - &fv.discounts[agent];
                        return if d.is_negative() { Rational::zero() } else { d };
                    }
                }
                if let Some(k) = mu_support.iter().position(|&a| a == agent) {
                    if t_bits & (1 << k) != 0 && instance.agents[agent].value[pos] > Money(0) {
                        return base + &fv.raises[agent];
                    }
                }
                base
            };
            let values: Vec<Rational> = allocations
                .iter()
                .map(|a| {
                    a.placements
                        .iter()
                        .map(|(&pos, &agent)| updated(agent, pos))
                        .sum()
                })
                .collect();
            let new_best = values.iter().cloned().max().unwrap_or_else(Rational::zero);
            if optimal_idx.iter().any(|&i| values[i] != new_best) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalitional::vcg_feedback;
    use crate::model::AuctionInstance;
    use num::FromPrimitive;

    fn zvcg() -> AuctionInstance {
        AuctionInstance::parse(include_str!("../fixtures/zvcg.json")).unwrap()
    }

    fn single_item(bids: &[i64]) -> AuctionInstance {
        let agents: Vec<String> = bids
            .iter()
            .enumerate()
            .map(|(i, b)| {
                format!(
                    r#"{{"id": "a{}", "duration_s": 10, "value_micro": {}, "bid_micro": {}}}"#,
                    i, b, b
                )
            })
            .collect();
        let doc = format!(
            r#"{{"pod": {{"positions": 1, "max_ads": 1, "max_duration_s": 10}},
                "agents": [{}]}}"#,
            agents.join(",")
        );
        AuctionInstance::parse(&doc).unwrap()
    }

    fn r(v: i64) -> Rational {
        Rational::from_i64(v).unwrap()
    }

    #[test]
    fn zvcg_core_winners() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let fv = core_feedback(&inst, &bids, CoreSide::Winners);
        assert_eq!(fv.discounts, vec![r(0), r(5_000_000), r(5_000_000)]);
        assert_eq!(fv.raises, vec![r(0), r(0), r(0)]);
        assert_eq!(fv.seller_payoff, r(10_000_000));
    }

    #[test]
    fn zvcg_core_losers() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let fv = core_feedback(&inst, &bids, CoreSide::Losers);
        assert_eq!(fv.raises, vec![r(10_000_000), r(0), r(0)]);
        assert_eq!(fv.discounts, vec![r(0), r(0), r(0)]);
    }

    #[test]
    fn zvcg_bicore_leximin() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let fv = bicore_feedback(&inst, &bids);
        let third = Rational::new(10_000_000.into(), 3.into());
        assert_eq!(fv.raises[0], third);
        assert_eq!(fv.discounts[1], third);
        assert_eq!(fv.discounts[2], third);
    }

    #[test]
    fn zvcg_bicore_triple_constraint_present() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let statuses = classify_agents(&inst, &bids);
        let oracle = CoalitionalOracle::new(&inst, &bids);
        let layout = VarLayout::from_statuses(&statuses);
        let set = bicore_constraints(&oracle, &layout);
        // S = {1,2} (winners), T = {0} (loser): μ₀ + π₁ + π₂ ≤ 10
        let triple = set
            .pairs
            .iter()
            .find(|&&(s, t, _)| s == 0b110 && t == 0b001)
            .expect("triple constraint retained");
        assert_eq!(triple.2, Money(10_000_000));
        assert!(set.pairs.iter().all(|&(_, _, rhs)| rhs >= Money(0)));
    }

    #[test]
    fn zvcg_bicore_saturating_gives_full_raise() {
        // with the loser's raise prioritized, the constraint μ₀ ≤ 10 binds
        // first and the winners get nothing extra
        let inst = zvcg();
        let bids = inst.bid_profile();
        let statuses = classify_agents(&inst, &bids);
        let oracle = CoalitionalOracle::new(&inst, &bids);
        let fv = bicore_feedback_with(&inst, &oracle, &statuses, Some(&[true, false, false]));
        assert_eq!(fv.raises[0], r(10_000_000));
        assert_eq!(fv.discounts[1], r(0));
        assert_eq!(fv.discounts[2], r(0));
    }

    #[test]
    fn single_item_core_equals_vcg() {
        let inst = single_item(&[10_000_000, 7_000_000, 3_000_000]);
        let bids = inst.bid_profile();
        let vcg = vcg_feedback(&inst, &bids);
        let w = core_feedback(&inst, &bids, CoreSide::Winners);
        let l = core_feedback(&inst, &bids, CoreSide::Losers);
        assert_eq!(w.discounts, vcg.discounts);
        assert_eq!(l.raises, vcg.raises);
    }

    #[test]
    fn single_item_bicore_pair_constraints() {
        let inst = single_item(&[10_000_000, 7_000_000, 3_000_000]);
        let bids = inst.bid_profile();
        let statuses = classify_agents(&inst, &bids);
        let oracle = CoalitionalOracle::new(&inst, &bids);
        let layout = VarLayout::from_statuses(&statuses);
        let set = bicore_constraints(&oracle, &layout);
        // winner 0 with loser i: π₀ + μ_i ≤ b₀ − b_i
        let pair_1 = set
            .pairs
            .iter()
            .find(|&&(s, t, _)| s == 0b001 && t == 0b010)
            .unwrap();
        assert_eq!(pair_1.2, Money(3_000_000));
        let pair_2 = set
            .pairs
            .iter()
            .find(|&&(s, t, _)| s == 0b001 && t == 0b100)
            .unwrap();
        assert_eq!(pair_2.2, Money(7_000_000));
    }

    #[test]
    fn zvcg_vcg_feedback_fails_joint_oracle() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let fv = vcg_feedback(&inst, &bids);
        assert!(!bicore_membership_oracle(&inst, &bids, &fv).unwrap());
        assert!(!bicore_membership(&inst, &bids, &fv));
    }

    #[test]
    fn zero_vector_is_member() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let fv = FeedbackVector::zeros(3, Money(20_000_000));
        assert!(bicore_membership_oracle(&inst, &bids, &fv).unwrap());
        assert!(bicore_membership(&inst, &bids, &fv));
    }

    #[test]
    fn bicore_point_passes_both_membership_checks() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let fv = bicore_feedback(&inst, &bids);
        assert!(bicore_membership(&inst, &bids, &fv));
        assert!(bicore_membership_oracle(&inst, &bids, &fv).unwrap());
    }

    #[test]
    fn one_sided_points_are_bicore_members() {
        // (π, 0) with π in the winners' core and (0, μ) with μ in the
        // losers' core both lie in the joint polytope
        let inst = zvcg();
        let bids = inst.bid_profile();
        let w = core_feedback(&inst, &bids, CoreSide::Winners);
        let l = core_feedback(&inst, &bids, CoreSide::Losers);
        assert!(bicore_membership(&inst, &bids, &w));
        assert!(bicore_membership(&inst, &bids, &l));
        assert!(bicore_membership_oracle(&inst, &bids, &w).unwrap());
        assert!(bicore_membership_oracle(&inst, &bids, &l).unwrap());
    }

    #[test]
    fn downward_closure() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let fv = bicore_feedback(&inst, &bids);
        let half = Rational::new(1.into(), 2.into());
        let scaled = FeedbackVector {
            discounts: fv.discounts.iter().map(|v| v * &half).collect(),
            raises: fv.raises.iter().map(|v| v * &half).collect(),
            seller_payoff: Rational::zero(),
        };
        assert!(bicore_membership(&inst, &bids, &scaled));
        assert!(bicore_membership_oracle(&inst, &bids, &scaled).unwrap());
    }

    #[test]
    fn core_discounts_bounded_by_vcg() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let vcg = vcg_feedback(&inst, &bids);
        let w = core_feedback(&inst, &bids, CoreSide::Winners);
        for i in 0..3 {
            assert!(w.discounts[i] <= vcg.discounts[i]);
        }
    }

    #[test]
    fn validity_of_policy_outputs() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let statuses = classify_agents(&inst, &bids);
        for fv in [
            vcg_feedback(&inst, &bids),
            core_feedback(&inst, &bids, CoreSide::Winners),
            core_feedback(&inst, &bids, CoreSide::Losers),
            bicore_feedback(&inst, &bids),
        ] {
            assert!(is_valid_feedback(&statuses, &fv));
        }
    }
}
