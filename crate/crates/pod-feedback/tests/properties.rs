//! Randomized property tests for the model, solver, feedback, and dynamics
//! layers.

use num::{BigRational, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pod_feedback::coalitional::{CoalitionalOracle, CoalitionalValue, rational, vcg_feedback};
use pod_feedback::dynamics::{
    DynamicsConfig, EpsilonRule, InitialTargets, Policy, run,
};
use pod_feedback::feedback::{bicore_feedback, bicore_membership, core_both_sides};
use pod_feedback::generator::{GeneratorParams, generate_instance};
use pod_feedback::model::{AgentStatus, AuctionInstance, BidProfile, Money};
use pod_feedback::solver::{
    SolveConstraints, brute_force_solve, classify_agents, enumerate_feasible_allocations,
    solve_constrained,
};

/// Deterministic small instance with randomized bids, driven by two seeds.
fn small_instance(seed: u64, index: u64) -> (AuctionInstance, BidProfile) {
    let params = GeneratorParams {
        seed,
        bidders_min: 2,
        bidders_max: 5,
        ..GeneratorParams::default()
    };
    let mut inst = generate_instance(&params, index).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.rotate_left(17));
    for agent in &mut inst.agents {
        let b = Money(rng.gen_range(1..=agent.max_value().micro()));
        for slot in &mut agent.bid {
            *slot = b;
        }
    }
    let bids = inst.bid_profile();
    (inst, bids)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    /// Canonical JSON round-trips bit-exactly through parse/serialize.
    #[test]
    fn json_round_trip(seed in 0u64..1_000, index in 0u64..1_000) {
        let (inst, _) = small_instance(seed, index);
        let doc = inst.to_json();
        let back = AuctionInstance::parse(&doc).unwrap();
        prop_assert_eq!(back.to_json(), doc);
    }

    /// The pruned solver and the unpruned enumeration agree under random
    /// forced/excluded constraints.
    #[test]
    fn solver_agrees_with_enumeration(seed in 0u64..500, index in 0u64..200, c in 0u32..4096) {
        let (inst, bids) = small_instance(seed, index);
        let full = (1u32 << inst.num_agents()) - 1;
        let forced = c & full;
        let excluded = (c >> 6) & full & !forced;
        let cons = SolveConstraints::new(forced, excluded).unwrap();
        let fast = solve_constrained(&inst, &bids, &cons);
        let slow = brute_force_solve(&inst, &bids, &cons).unwrap();
        prop_assert_eq!(fast.value(), slow.value());
    }

    /// Forcing more agents in, or excluding more, never raises the
    /// attainable value.
    #[test]
    fn coalition_value_monotone(seed in 0u64..500, index in 0u64..200, m in 0u32..1024) {
        let (inst, bids) = small_instance(seed, index);
        let oracle = CoalitionalOracle::new(&inst, &bids);
        let full = oracle.full_mask();
        let t = m & full;
        let bigger = t | ((m >> 5) & full);
        let v_small = oracle.value_bi(full, t);
        let v_large = oracle.value_bi(full, bigger);
        match (v_small, v_large) {
            (CoalitionalValue::Finite(a), CoalitionalValue::Finite(b)) => prop_assert!(b <= a),
            (CoalitionalValue::NegInfinity, CoalitionalValue::Finite(_)) => {
                prop_assert!(false, "a superset of an infeasible forced set cannot be feasible")
            }
            _ => {}
        }
    }

    /// Single-agent characterization: discounting a strict winner by its
    /// full VCG discount keeps it winning; one micro more and the original
    /// optimum is no longer attainable for it.
    #[test]
    fn vcg_discount_is_the_exact_single_agent_bound(seed in 0u64..500, index in 0u64..200) {
        let (inst, bids) = small_instance(seed, index);
        let statuses = classify_agents(&inst, &bids);
        let fv = vcg_feedback(&inst, &bids);
        let base = solve_constrained(&inst, &bids, &SolveConstraints::none())
            .value()
            .unwrap_or(Money(0));
        for (i, s) in statuses.iter().enumerate() {
            if *s != AgentStatus::StrictWinner {
                continue;
            }
            let d = &fv.discounts[i];
            prop_assert!(d.is_integer(), "integer bids give integer VCG discounts");
            let d = Money(d.to_integer().try_into().unwrap());
            for (extra, should_win) in [(Money(0), true), (Money(1), false)] {
                let mut updated = bids.clone();
                for slot in &mut updated[i] {
                    *slot = (*slot - d - extra).max(Money(0));
                }
                let with_i = solve_constrained(&inst, &updated, &SolveConstraints::forcing(&[i]))
                    .value();
                let without_i =
                    solve_constrained(&inst, &updated, &SolveConstraints::excluding(&[i]))
                        .value()
                        .unwrap_or(Money(0));
                let expected = base - d - extra;
                if should_win {
                    prop_assert_eq!(with_i, Some(expected));
                    prop_assert!(without_i <= expected);
                } else {
                    // discounted past the bound, dropping the agent does
                    // at least as well as keeping it
                    prop_assert!(without_i >= with_i.unwrap_or(Money(0)));
                }
            }
        }
    }

    /// Winner discounts never exceed the winner's bid on any optimal
    /// allocation (for the VCG, core, and joint policies alike).
    #[test]
    fn discounts_bounded_by_optimal_bids(seed in 0u64..500, index in 0u64..200) {
        let (inst, bids) = small_instance(seed, index);
        let statuses = classify_agents(&inst, &bids);
        let oracle = CoalitionalOracle::new(&inst, &bids);
        let allocations = enumerate_feasible_allocations(&inst).unwrap();
        let values: Vec<BigRational> = allocations
            .iter()
            .map(|a| {
                a.placements
                    .iter()
                    .map(|(&pos, &agent)| rational(bids[agent][pos]))
                    .sum()
            })
            .collect();
        let best = values.iter().cloned().max().unwrap_or_else(BigRational::zero);
        for fv in [
            vcg_feedback(&inst, &bids),
            core_both_sides(&inst, &oracle, &statuses),
            bicore_feedback(&inst, &bids),
        ] {
            for (alloc, v) in allocations.iter().zip(&values) {
                if *v != best {
                    continue;
                }
                for (&pos, &agent) in &alloc.placements {
                    if statuses[agent] == AgentStatus::StrictWinner {
                        prop_assert!(fv.discounts[agent] <= rational(bids[agent][pos]));
                    }
                }
            }
        }
    }

    /// Core and joint policy outputs are members of the joint polytope, and
    /// scaling them down keeps them members.
    #[test]
    fn policy_outputs_are_members(seed in 0u64..500, index in 0u64..200, num in 1i64..=10) {
        let (inst, bids) = small_instance(seed, index);
        let fv = bicore_feedback(&inst, &bids);
        prop_assert!(bicore_membership(&inst, &bids, &fv));
        let mut scaled = fv.clone();
        let f = BigRational::new(num.into(), 10.into());
        for x in scaled.discounts.iter_mut().chain(scaled.raises.iter_mut()) {
            *x *= &f;
        }
        prop_assert!(bicore_membership(&inst, &bids, &scaled));
    }

    /// Along any dynamics trace, bids stay within [0, v] for every agent.
    #[test]
    fn dynamics_bids_stay_in_range(seed in 0u64..500, index in 0u64..100, policy in 0usize..3) {
        let (inst, _) = small_instance(seed, index);
        let policy = [Policy::Vcg, Policy::Core, Policy::Bicore][policy];
        let config = DynamicsConfig {
            max_rounds: 10,
            epsilon: EpsilonRule::ValueFraction,
            ..DynamicsConfig::default()
        };
        let trace = run(&inst, policy, &config, InitialTargets::RandomTargets(seed ^ index));
        for round in &trace.rounds {
            for (agent, bid) in round.bids.iter().enumerate() {
                let v = inst.agents[agent].max_value().micro();
                for &b in bid {
                    prop_assert!((0..=v).contains(&b));
                }
            }
        }
    }
}
