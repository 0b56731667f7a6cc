//! Exact winner determination for pod instances under coalition constraints
//! (forced winners, excluded agents), plus an unpruned enumeration oracle.

use thiserror::Error;

use crate::model::{Allocation, AuctionInstance, BidProfile, Money, AgentStatus};

/// Sentinel cost for forbidden assignment cells; larger than any real sum.
const FORBIDDEN: i64 = 1 << 60;

/// Coalition constraints on a solve: `forced_in` agents must win (be placed
/// at a positive-value position), `excluded` agents must not be placed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveConstraints {
    pub forced_in: u32,
    pub excluded: u32,
}

impl SolveConstraints {
    pub fn none() -> Self {
        SolveConstraints::default()
    }

    pub fn new(forced_in: u32, excluded: u32) -> Result<Self, SolveError> {
        if forced_in & excluded != 0 {
            return Err(SolveError::OverlappingConstraints);
        }
        Ok(SolveConstraints { forced_in, excluded })
    }

    pub fn forcing(agents: &[usize]) -> Self {
        SolveConstraints {
            forced_in: mask_of(agents),
            excluded: 0,
        }
    }

    pub fn excluding(agents: &[usize]) -> Self {
        SolveConstraints {
            forced_in: 0,
            excluded: mask_of(agents),
        }
    }
}

pub fn mask_of(agents: &[usize]) -> u32 {
    agents.iter().fold(0u32, |m, &a| m | (1 << a))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    Optimal { value: Money, witness: Allocation },
    Infeasible,
}

impl SolveResult {
    pub fn value(&self) -> Option<Money> {
        match self {
            SolveResult::Optimal { value, .. } => Some(*value),
            SolveResult::Infeasible => None,
        }
    }

    pub fn witness(&self) -> Option<&Allocation> {
        match self {
            SolveResult::Optimal { witness, .. } => Some(witness),
            SolveResult::Infeasible => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("forced_in and excluded sets overlap")]
    OverlappingConstraints,
    #[error("instance exceeds the size guard for this operation")]
    SizeGuard,
}

/// Maximum-value feasible allocation in which every `forced_in` agent wins
/// and no `excluded` agent is placed.
///
/// Enumerates ad subsets in decreasing upper-bound order with pruning, then
/// assigns the chosen subset to positions (Hungarian method for per-position
/// bids; skipped in the uniform case).
pub fn solve_constrained(
    instance: &AuctionInstance,
    bids: &BidProfile,
    cons: &SolveConstraints,
) -> SolveResult {
    let n = instance.num_agents();
    let pod = &instance.pod;
    let forced = cons.forced_in;
    let all: u32 = if n == 32 { u32::MAX } else { (1 << n) - 1 };
    let eligible = all & !cons.excluded;
    if forced & !eligible != 0 {
        return SolveResult::Infeasible;
    }
    // a forced agent with no positive-value position can never win
    for i in 0..n {
        if forced >> i & 1 == 1 && !instance.agents[i].has_value_support() {
            return SolveResult::Infeasible;
        }
    }

    let excl_masks = exclusion_masks(instance);
    let uniform = instance.agents.iter().enumerate().all(|(i, a)| {
        a.value.iter().all(|&v| v == a.value[0]) && bids[i].iter().all(|&b| b == bids[i][0])
    });

    let optional = eligible & !forced;
    let optional_bits: Vec<usize> = (0..n).filter(|&i| optional >> i & 1 == 1).collect();

    // candidate subsets feasible on count/duration/exclusions, with a
    // bid-sum upper bound for pruning
    let mut candidates: Vec<(i64, u32)> = Vec::new();
    for pick in 0u32..(1 << optional_bits.len()) {
        let mut mask = forced;
        for (k, &i) in optional_bits.iter().enumerate() {
            if pick >> k & 1 == 1 {
                mask |= 1 << i;
            }
        }
        if (mask.count_ones() as usize) > pod.max_ads {
            continue;
        }
        let mut dur: u64 = 0;
        let mut ok = true;
        let mut ub: i64 = 0;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                dur += instance.agents[i].duration_s as u64;
                if mask & excl_masks[i] != 0 {
                    ok = false;
                    break;
                }
                ub += bids[i].iter().map(|b| b.micro()).max().unwrap_or(0);
            }
        }
        if !ok || dur > pod.max_duration_s as u64 {
            continue;
        }
        candidates.push((ub, mask));
    }
    if candidates.is_empty() {
        return SolveResult::Infeasible;
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut best: Option<(Money, Allocation)> = None;
    for (ub, mask) in candidates {
        if let Some((bv, _)) = &best {
            if ub <= bv.micro() {
                break;
            }
        }
        let solved = if uniform {
            assign_uniform(instance, bids, mask, forced)
        } else {
            assign_hungarian(instance, bids, mask, forced)
        };
        if let Some((value, alloc)) = solved {
            if best.as_ref().map(|(bv, _)| value > *bv).unwrap_or(true) {
                best = Some((value, alloc));
            }
        }
    }
    match best {
        Some((value, witness)) => SolveResult::Optimal { value, witness },
        None => SolveResult::Infeasible,
    }
}

fn exclusion_masks(instance: &AuctionInstance) -> Vec<u32> {
    let n = instance.num_agents();
    let mut masks = vec![0u32; n];
    for &(a, b) in &instance.pod.exclusions {
        masks[a] |= 1 << b;
        masks[b] |= 1 << a;
    }
    masks
}

fn members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Uniform bids: any injective placement attains the bid sum; positions are
/// assigned in agent order.
fn assign_uniform(
    instance: &AuctionInstance,
    bids: &BidProfile,
    mask: u32,
    _forced: u32,
) -> Option<(Money, Allocation)> {
    let agents = members(mask, instance.num_agents());
    let mut value = Money::ZERO;
    let mut pairs = Vec::new();
    for (pos, &a) in agents.iter().enumerate() {
        value += bids[a][0];
        pairs.push((pos, a));
    }
    Some((value, Allocation::from_pairs(&pairs)))
}

/// Per-position bids: maximum-weight injective placement via the Hungarian
/// method, with forced agents forbidden at their zero-value positions.
fn assign_hungarian(
    instance: &AuctionInstance,
    bids: &BidProfile,
    mask: u32,
    forced: u32,
) -> Option<(Money, Allocation)> {
    let agents = members(mask, instance.num_agents());
    let m = instance.pod.positions;
    if agents.is_empty() {
        return Some((Money::ZERO, Allocation::empty()));
    }
    debug_assert!(agents.len() <= m);
    let cost: Vec<Vec<i64>> = agents
        .iter()
        .map(|&a| {
            (0..m)
                .map(|p| {
                    if forced >> a & 1 == 1 && !instance.agents[a].value[p].is_positive() {
                        FORBIDDEN
                    } else {
                        -bids[a][p].micro()
                    }
                })
                .collect()
        })
        .collect();
    let (total, row_to_col) = hungarian_min(&cost);
    if total >= FORBIDDEN / 2 {
        return None;
    }
    let pairs: Vec<(usize, usize)> = agents
        .iter()
        .enumerate()
        .map(|(r, &a)| (row_to_col[r], a))
        .collect();
    Some((Money(-total), Allocation::from_pairs(&pairs)))
}

/// O(rows^2 * cols) Hungarian algorithm (shortest augmenting paths with
/// potentials) for a rectangular min-cost assignment, rows <= cols.
fn hungarian_min(cost: &[Vec<i64>]) -> (i64, Vec<usize>) {
    const INF: i64 = i64::MAX / 4;
    let n = cost.len();
    let m = cost[0].len();
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![usize::MAX; n];
    let mut total = 0i64;
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
            total += cost[p[j] - 1][j - 1];
        }
    }
    (total, assignment)
}

/// Unpruned enumeration oracle with the same contract as
/// [`solve_constrained`]. Guarded to small instances.
pub fn brute_force_solve(
    instance: &AuctionInstance,
    bids: &BidProfile,
    cons: &SolveConstraints,
) -> Result<SolveResult, SolveError> {
    let n = instance.num_agents();
    if n > 8 || instance.pod.positions > 6 {
        return Err(SolveError::SizeGuard);
    }
    let forced = cons.forced_in;
    if forced & cons.excluded != 0 {
        return Err(SolveError::OverlappingConstraints);
    }
    let all: u32 = (1 << n) - 1;
    let eligible = all & !cons.excluded;
    let mut best: Option<(Money, Allocation)> = None;
    for mask in 0..=all {
        if mask & !eligible != 0 || forced & !mask != 0 {
            continue;
        }
        let agents = members(mask, n);
        let mut positions = vec![usize::MAX; agents.len()];
        let mut used = vec![false; instance.pod.positions];
        enumerate_assignments(
            instance,
            bids,
            &agents,
            forced,
            0,
            &mut positions,
            &mut used,
            &mut best,
        );
    }
    Ok(match best {
        Some((value, witness)) => SolveResult::Optimal { value, witness },
        None => SolveResult::Infeasible,
    })
}

#[allow(clippy::too_many_arguments)]
fn enumerate_assignments(
    instance: &AuctionInstance,
    bids: &BidProfile,
    agents: &[usize],
    forced: u32,
    depth: usize,
    positions: &mut [usize],
    used: &mut [bool],
    best: &mut Option<(Money, Allocation)>,
) {
    if depth == agents.len() {
        let pairs: Vec<(usize, usize)> = agents
            .iter()
            .enumerate()
            .map(|(k, &a)| (positions[k], a))
            .collect();
        let alloc = Allocation::from_pairs(&pairs);
        if !crate::model::is_feasible(instance, &alloc).unwrap_or(false) {
            return;
        }
        for &a in agents {
            if forced >> a & 1 == 1 && !alloc.wins(instance, a) {
                return;
            }
        }
        let value: Money = pairs.iter().map(|&(p, a)| bids[a][p]).sum();
        if best.as_ref().map(|(bv, _)| value > *bv).unwrap_or(true) {
            *best = Some((value, alloc));
        }
        return;
    }
    for pos in 0..instance.pod.positions {
        if !used[pos] {
            used[pos] = true;
            positions[depth] = pos;
            enumerate_assignments(instance, bids, agents, forced, depth + 1, positions, used, best);
            used[pos] = false;
        }
    }
}

/// All feasible allocations of an instance, including placements at
/// zero-value positions. Guarded to small instances.
pub fn enumerate_feasible_allocations(
    instance: &AuctionInstance,
) -> Result<Vec<Allocation>, SolveError> {
    let n = instance.num_agents();
    if n > 8 || instance.pod.positions > 6 {
        return Err(SolveError::SizeGuard);
    }
    let all: u32 = (1 << n) - 1;
    let mut out = Vec::new();
    for mask in 0..=all {
        let agents = members(mask, n);
        if agents.len() > instance.pod.max_ads {
            continue;
        }
        let mut stack: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
        for (k, &a) in agents.iter().enumerate() {
            let mut next = Vec::new();
            for partial in &stack {
                for pos in 0..instance.pod.positions {
                    if !partial.iter().any(|&(p, _)| p == pos) {
                        let mut ext = partial.clone();
                        ext.push((pos, a));
                        next.push(ext);
                    }
                }
            }
            stack = next;
            let _ = k;
        }
        for pairs in stack {
            let alloc = Allocation::from_pairs(&pairs);
            if crate::model::is_feasible(instance, &alloc).unwrap_or(false) {
                out.push(alloc);
            }
        }
    }
    Ok(out)
}

/// Derives each agent's status from constrained re-solves: winning iff
/// forcing the agent in preserves the optimum, losing iff excluding it does.
pub fn classify_agents(instance: &AuctionInstance, bids: &BidProfile) -> Vec<AgentStatus> {
    let n = instance.num_agents();
    let opt = solve_constrained(instance, bids, &SolveConstraints::none())
        .value()
        .expect("unconstrained solve is always feasible");
    (0..n)
        .map(|i| {
            let winning = solve_constrained(instance, bids, &SolveConstraints::forcing(&[i]))
                .value()
                .map(|v| v == opt)
                .unwrap_or(false);
            let losing = solve_constrained(instance, bids, &SolveConstraints::excluding(&[i]))
                .value()
                .map(|v| v == opt)
                .unwrap_or(false);
            match (winning, losing) {
                (true, false) => AgentStatus::StrictWinner,
                (false, true) => AgentStatus::StrictLoser,
                (true, true) => AgentStatus::Tied,
                (false, false) => unreachable!("agent neither winning nor losing"),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AuctionInstance;

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

    #[test]
    fn zvcg_unconstrained() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let res = solve_constrained(&inst, &bids, &SolveConstraints::none());
        assert_eq!(res.value(), Some(Money(20_000_000)));
        let winners = res.witness().unwrap().placed_agents();
        assert_eq!(winners.into_iter().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn zvcg_forced_agent1() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let res = solve_constrained(&inst, &bids, &SolveConstraints::forcing(&[0]));
        assert_eq!(res.value(), Some(Money(10_000_000)));
    }

    #[test]
    fn zvcg_forced_pair_infeasible() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let res = solve_constrained(&inst, &bids, &SolveConstraints::forcing(&[0, 1]));
        assert_eq!(res, SolveResult::Infeasible);
    }

    #[test]
    fn zvcg_excluded_pair() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let res = solve_constrained(&inst, &bids, &SolveConstraints::excluding(&[1, 2]));
        assert_eq!(res.value(), Some(Money(10_000_000)));
        let bf = brute_force_solve(&inst, &bids, &SolveConstraints::excluding(&[1, 2])).unwrap();
        assert_eq!(bf.value(), Some(Money(10_000_000)));
    }

    #[test]
    fn excluded_all() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        let res = solve_constrained(&inst, &bids, &SolveConstraints::excluding(&[0, 1, 2]));
        assert_eq!(res.value(), Some(Money::ZERO));
        assert!(res.witness().unwrap().placements.is_empty());
    }

    #[test]
    fn zvcg_statuses() {
        let inst = zvcg();
        let bids = inst.bid_profile();
        assert_eq!(
            classify_agents(&inst, &bids),
            vec![
                AgentStatus::StrictLoser,
                AgentStatus::StrictWinner,
                AgentStatus::StrictWinner
            ]
        );
    }

    #[test]
    fn identical_ads_one_position_are_tied() {
        let inst = AuctionInstance::parse(
            r#"{
            "pod": {"positions": 1, "max_ads": 1, "max_duration_s": 30, "exclusions": []},
            "agents": [
                {"id": "x", "duration_s": 15, "value_micro": 5000000, "bid_micro": 5000000},
                {"id": "y", "duration_s": 15, "value_micro": 5000000, "bid_micro": 5000000}
            ]
        }"#,
        )
        .unwrap();
        let bids = inst.bid_profile();
        assert_eq!(
            classify_agents(&inst, &bids),
            vec![AgentStatus::Tied, AgentStatus::Tied]
        );
    }

    #[test]
    fn single_agent_strict_winner() {
        let inst = AuctionInstance::parse(
            r#"{
            "pod": {"positions": 1, "max_ads": 1, "max_duration_s": 30, "exclusions": []},
            "agents": [
                {"id": "x", "duration_s": 15, "value_micro": 5000000, "bid_micro": 5000000}
            ]
        }"#,
        )
        .unwrap();
        let bids = inst.bid_profile();
        assert_eq!(classify_agents(&inst, &bids), vec![AgentStatus::StrictWinner]);
    }

    #[test]
    fn witness_respects_exclusions() {
        let inst = AuctionInstance::parse(
            r#"{
            "pod": {"positions": 2, "max_ads": 2, "max_duration_s": 60,
                    "exclusions": [["a", "b"]]},
            "agents": [
                {"id": "a", "duration_s": 15, "value_micro": 9000000, "bid_micro": 9000000},
                {"id": "b", "duration_s": 15, "value_micro": 8000000, "bid_micro": 8000000},
                {"id": "c", "duration_s": 15, "value_micro": 2000000, "bid_micro": 2000000}
            ]
        }"#,
        )
        .unwrap();
        let bids = inst.bid_profile();
        let res = solve_constrained(&inst, &bids, &SolveConstraints::none());
        assert_eq!(res.value(), Some(Money(11_000_000)));
        let placed = res.witness().unwrap().placed_agents();
        assert!(!(placed.contains(&0) && placed.contains(&1)));
    }

    #[test]
    fn per_position_bids_use_assignment() {
        let inst = AuctionInstance::parse(
            r#"{
            "pod": {"positions": 2, "max_ads": 2, "max_duration_s": 60, "exclusions": []},
            "agents": [
                {"id": "a", "duration_s": 15, "value_micro": [5000000, 2000000],
                 "bid_micro": [5000000, 2000000]},
                {"id": "b", "duration_s": 15, "value_micro": [3000000, 1000000],
                 "bid_micro": [3000000, 1000000]}
            ]
        }"#,
        )
        .unwrap();
        let bids = inst.bid_profile();
        let res = solve_constrained(&inst, &bids, &SolveConstraints::none());
        // a takes position 0 (5), b takes position 1 (1): 6 total
        assert_eq!(res.value(), Some(Money(6_000_000)));
        let bf = brute_force_solve(&inst, &bids, &SolveConstraints::none()).unwrap();
        assert_eq!(bf.value(), res.value());
    }
}
