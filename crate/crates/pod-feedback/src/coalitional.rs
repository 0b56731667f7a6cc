//! Coalitional value functions over pairs of agent sets and VCG feedback.
//!
//! `V(S, T)` is the maximum bid value collectively achievable for the agents
//! in `S ∪ T` subject to every agent in `T` winning; infeasible
//! maximizations are represented explicitly as `NegInfinity`.

use std::collections::HashMap;
use std::sync::Mutex;

use num::BigRational;
use num::FromPrimitive;
use num::Zero;

use crate::model::{AgentStatus, AuctionInstance, BidProfile, Money};
use crate::solver::{classify_agents, solve_constrained, SolveConstraints};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoalitionalValue {
    Finite(Money),
    NegInfinity,
}

impl CoalitionalValue {
    pub fn finite(self) -> Option<Money> {
        match self {
            CoalitionalValue::Finite(v) => Some(v),
            CoalitionalValue::NegInfinity => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, CoalitionalValue::Finite(_))
    }
}

/// Joint discounts and raises, with the derived seller payoff.
///
/// Components are exact rationals in micro-units: VCG feedback is always
/// integral but core/bicore leximin points are generally not.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackVector {
    pub discounts: Vec<BigRational>,
    pub raises: Vec<BigRational>,
    pub seller_payoff: BigRational,
}

impl FeedbackVector {
    pub fn zeros(n: usize, optimal_value: Money) -> Self {
        FeedbackVector {
            discounts: vec![BigRational::zero(); n],
            raises: vec![BigRational::zero(); n],
            seller_payoff: rational(optimal_value),
        }
    }
}

pub fn rational(m: Money) -> BigRational {
    BigRational::from_i64(m.micro()).expect("i64 always converts")
}

/// Floors a rational micro-amount down to whole micro-units. Flooring keeps
/// feedback inside the (downward-closed) core and bicore polytopes.
pub fn floor_money(r: &BigRational) -> Money {
    use num::ToPrimitive;
    Money(r.floor().to_integer().to_i64().expect("amount fits in i64"))
}

/// Memoized evaluator for `V(S, T)` over one `(instance, bids)` pair.
///
/// The memo table is safe for concurrent reads and idempotent concurrent
/// inserts; everything else is pure.
pub struct CoalitionalOracle<'a> {
    pub instance: &'a AuctionInstance,
    pub bids: &'a BidProfile,
    full: u32,
    memo: Mutex<HashMap<(u32, u32), CoalitionalValue>>,
}

impl<'a> CoalitionalOracle<'a> {
    pub fn new(instance: &'a AuctionInstance, bids: &'a BidProfile) -> Self {
        let n = instance.num_agents();
        CoalitionalOracle {
            instance,
            bids,
            full: if n == 32 { u32::MAX } else { (1 << n) - 1 },
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn full_mask(&self) -> u32 {
        self.full
    }

    /// `V(S, T)`: excluded agents are `N \ (S ∪ T)`, forced agents are `T`.
    /// Satisfies `V(S, T) = V(S \ T, T)` by construction.
    pub fn value_bi(&self, s: u32, t: u32) -> CoalitionalValue {
        let excluded = self.full & !(s | t);
        let key = (excluded, t);
        if let Some(v) = self.memo.lock().unwrap().get(&key) {
            return *v;
        }
        let cons = SolveConstraints {
            forced_in: t,
            excluded,
        };
        let v = match solve_constrained(self.instance, self.bids, &cons).value() {
            Some(value) => CoalitionalValue::Finite(value),
            None => CoalitionalValue::NegInfinity,
        };
        self.memo.lock().unwrap().insert(key, v);
        v
    }

    /// `V_w(S) = V(S, ∅)`.
    pub fn value_w(&self, s: u32) -> Money {
        self.value_bi(s, 0)
            .finite()
            .expect("V_w is finite: the empty allocation is always feasible")
    }

    /// `V_ℓ(S) = V(N, N \ S)`.
    pub fn value_l(&self, s: u32) -> CoalitionalValue {
        self.value_bi(self.full, self.full & !s)
    }

    pub fn grand_value(&self) -> Money {
        self.value_w(self.full)
    }
}

/// VCG feedback: each strict winner's discount is `V_w(N) - V_w(N-i)`,
/// each strict loser's raise is `V_ℓ(N) - V_ℓ(N-i)`, tied agents get zero.
pub fn vcg_feedback(instance: &AuctionInstance, bids: &BidProfile) -> FeedbackVector {
    let statuses = classify_agents(instance, bids);
    vcg_feedback_with(&CoalitionalOracle::new(instance, bids), &statuses)
}

pub fn vcg_feedback_with(
    oracle: &CoalitionalOracle<'_>,
    statuses: &[AgentStatus],
) -> FeedbackVector {
    let n = statuses.len();
    let full = oracle.full_mask();
    let grand = oracle.grand_value();
    let mut fv = FeedbackVector::zeros(n, grand);
    for i in 0..n {
        match statuses[i] {
            AgentStatus::StrictWinner => {
                let without = oracle.value_w(full & !(1 << i));
                fv.discounts[i] = rational(grand - without);
            }
            AgentStatus::StrictLoser => {
                let forced = oracle
                    .value_l(full & !(1 << i))
                    .finite()
                    .expect("VCG raise is finite: every agent has value support");
                fv.raises[i] = rational(grand - forced);
            }
            AgentStatus::Tied => {}
        }
    }
    let total: BigRational = fv.discounts.iter().sum();
    fv.seller_payoff = rational(grand) - total;
    fv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AuctionInstance;
    use crate::solver::mask_of;

    fn zvcg() -> AuctionInstance {
        AuctionInstance::parse(
            r#"{
            "pod": {"positions": 2, "max_ads": 2, "max_duration_s": 30, "exclusions": []},
            "agents": [
                {"id": "a1", "duration_s": 30, "value_micro": 10000000, "bid_micro": 10000000},
                {"id": "a2", "duration_s": 15, "value_micro": 10000000, "bid_micro": 10000000},
                {"id": "a3", "duration_s": 15, "value_micro": 10000000, "bid_micro": 10000000}
            ]
        }"#,
        )
        .unwrap()
    }

    fn single_item(bids_micro: &[i64]) -> AuctionInstance {
        let agents: Vec<String> = bids_micro
            .iter()
            .enumerate()
            .map(|(i, b)| {
                format!(
                    r#"{{"id": "a{i}", "duration_s": 15, "value_micro": {b}, "bid_micro": {b}}}"#
                )
            })
            .collect();
        AuctionInstance::parse(&format!(
            r#"{{"pod": {{"positions": 1, "max_ads": 1, "max_duration_s": 30, "exclusions": []}},
                 "agents": [{}]}}"#,
            agents.join(",")
        ))
        .unwrap()
    }

    #[test]
    fn zvcg_value_bi_examples() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let oracle = CoalitionalOracle::new(&inst, &bids);
        let n = oracle.full_mask();
        assert_eq!(
            oracle.value_bi(n, 0),
            CoalitionalValue::Finite(Money(20_000_000))
        );
        assert_eq!(
            oracle.value_bi(n, mask_of(&[0])),
            CoalitionalValue::Finite(Money(10_000_000))
        );
        assert_eq!(
            oracle.value_bi(n, mask_of(&[0, 1])),
            CoalitionalValue::NegInfinity
        );
        // V(S,T) = V(S \ T, T)
        assert_eq!(
            oracle.value_bi(n, mask_of(&[0])),
            oracle.value_bi(n & !1, mask_of(&[0]))
        );
    }

    #[test]
    fn zvcg_vcg_feedback() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let fv = vcg_feedback(&inst, &bids);
        let ten = rational(Money(10_000_000));
        assert_eq!(fv.discounts[0], BigRational::zero());
        assert_eq!(fv.discounts[1], ten);
        assert_eq!(fv.discounts[2], ten);
        assert_eq!(fv.raises[0], ten);
        assert_eq!(fv.raises[1], BigRational::zero());
        assert_eq!(fv.seller_payoff, BigRational::zero());
    }

    #[test]
    fn single_item_vcg_closed_forms() {
        let inst = single_item(&[10_000_000, 7_000_000, 3_000_000]);
        let bids = inst.bid_profile();
        let fv = vcg_feedback(&inst, &bids);
        assert_eq!(fv.discounts[0], rational(Money(3_000_000)));
        assert_eq!(fv.raises[1], rational(Money(3_000_000)));
        assert_eq!(fv.raises[2], rational(Money(7_000_000)));
        // discounted/raised bids (7, 10, 10)
        assert_eq!(
            rational(bids[0][0]) - &fv.discounts[0],
            rational(Money(7_000_000))
        );
        assert_eq!(
            rational(bids[1][0]) + &fv.raises[1],
            rational(Money(10_000_000))
        );
    }

    #[test]
    fn single_agent_vcg() {
        let inst = single_item(&[5_000_000]);
        let bids = inst.bid_profile();
        let fv = vcg_feedback(&inst, &bids);
        assert_eq!(fv.discounts[0], rational(Money(5_000_000)));
    }

    #[test]
    fn monotonicity_of_value_bi() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let oracle = CoalitionalOracle::new(&inst, &bids);
        let full = oracle.full_mask();
        // non-decreasing in S
        for s in 0..=full {
            for i in 0..3 {
                if s >> i & 1 == 0 {
                    let lo = oracle.value_bi(s, 0).finite().unwrap();
                    let hi = oracle.value_bi(s | (1 << i), 0).finite().unwrap();
                    assert!(hi >= lo);
                }
            }
        }
        // non-increasing in T (where finite)
        for t in 0..=full {
            for i in 0..3 {
                if t >> i & 1 == 0 {
                    let lo = oracle.value_bi(full, t);
                    let hi = oracle.value_bi(full, t | (1 << i));
                    if let (Some(a), Some(b)) = (lo.finite(), hi.finite()) {
                        assert!(b <= a);
                    }
                }
            }
        }
    }
}
