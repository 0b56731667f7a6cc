//! Assignment-problem specialization: the joint discount/raise polytope has
//! an exact linear programming characterization through the dual of the
//! matching LP, whose optimal solutions form a lattice with VCG feedback at
//! the extremes.

use num::{BigRational, One, Signed, Zero};
use rand::Rng;
use thiserror::Error;

use crate::coalitional::{rational, vcg_feedback, FeedbackVector};
use crate::lp::{solve_lp, LinearProgram, LpOutcome, Rational};
use crate::model::{AuctionInstance, Money};

/// `n` agents bidding on `m` items, `m ≤ n`; each agent takes at most one
/// item and every item is allocated.
#[derive(Debug, Clone)]
pub struct AssignmentInstance {
    pub bids: Vec<Vec<Money>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("need at least as many agents as items (n = {n}, m = {m})")]
    TooFewAgents { n: usize, m: usize },
    #[error("agent {0} has a bid row of length {1}, expected {2}")]
    RaggedRow(usize, usize, usize),
    #[error("negative bid for agent {0}, item {1}")]
    NegativeBid(usize, usize),
}

impl AssignmentInstance {
    pub fn new(bids: Vec<Vec<Money>>) -> Result<Self, AssignmentError> {
        let n = bids.len();
        let m = bids.first().map(|r| r.len()).unwrap_or(0);
        if m > n {
            return Err(AssignmentError::TooFewAgents { n, m });
        }
        for (i, row) in bids.iter().enumerate() {
            if row.len() != m {
                return Err(AssignmentError::RaggedRow(i, row.len(), m));
            }
            for (j, &b) in row.iter().enumerate() {
                if b < Money(0) {
                    return Err(AssignmentError::NegativeBid(i, j));
                }
            }
        }
        Ok(AssignmentInstance { bids })
    }

    pub fn num_agents(&self) -> usize {
        self.bids.len()
    }

    pub fn num_items(&self) -> usize {
        self.bids.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Exact optimal matching value via the (integral) matching LP.
    pub fn matching_value(&self) -> Rational {
        let (n, m) = (self.num_agents(), self.num_items());
        let mut constraints = Vec::new();
        // agent rows: Σ_j x_ij ≤ 1; item columns: Σ_i x_ij ≤ 1
        for i in 0..n {
            let mut a = vec![Rational::zero(); n * m];
            for j in 0..m {
                a[i * m + j] = Rational::one();
            }
            constraints.push((a, Rational::one()));
        }
        for j in 0..m {
            let mut a = vec![Rational::zero(); n * m];
            for i in 0..n {
                a[i * m + j] = Rational::one();
            }
            constraints.push((a, Rational::one()));
        }
        let objective: Vec<Rational> = self
            .bids
            .iter()
            .flat_map(|row| row.iter().map(|&b| rational(b)))
            .collect();
        let lp = LinearProgram {
            var_names: (0..n * m).map(|k| format!("x{k}")).collect(),
            objective,
            constraints,
        };
        match solve_lp(&lp) {
            LpOutcome::Optimal { value, .. } => value,
            _ => unreachable!("matching LP is feasible and bounded"),
        }
    }

    /// Equivalent pod instance: one position per item, unit durations, and a
    /// duration cap that never binds, with values equal to bids.
    pub fn to_pod_instance(&self) -> AuctionInstance {
        let m = self.num_items();
        let instance = AuctionInstance {
            pod: crate::model::PodSpec {
                positions: m,
                max_ads: m,
                max_duration_s: m as u32,
                exclusions: Default::default(),
            },
            agents: self
                .bids
                .iter()
                .enumerate()
                .map(|(i, row)| crate::model::AgentProfile {
                    id: format!("agent{i}"),
                    duration_s: 1,
                    value: row.clone(),
                    bid: row.clone(),
                })
                .collect(),
        };
        instance.validate().expect("pod equivalence is valid");
        instance
    }
}

/// A feasible point of the dual: π_i − μ_i + p_j ≥ b_ij with all components
/// nonnegative. Optimal points automatically satisfy π_i·μ_i = 0: lowering
/// both by their minimum would keep feasibility and reduce the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub pi: Vec<Rational>,
    pub mu: Vec<Rational>,
    pub prices: Vec<Rational>,
}

#[derive(Debug, Clone)]
pub enum DualObjective {
    /// lattice-smallest normalized optimum: componentwise-largest π, μ = 0,
    /// componentwise-smallest prices
    MinPoint,
    /// lattice-largest normalized optimum: componentwise-largest μ,
    /// componentwise-smallest π, componentwise-largest prices
    MaxPoint,
    /// a vertex of the optimal face maximizing the given weights over
    /// (π, μ, p)
    Weighted(Vec<Rational>),
}

/// Variable order: π (n), then μ (n), then p (m).
fn dual_face_constraints(inst: &AssignmentInstance) -> (Vec<(Vec<Rational>, Rational)>, usize) {
    let (n, m) = (inst.num_agents(), inst.num_items());
    let nvars = 2 * n + m;
    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..m {
            // −π_i + μ_i − p_j ≤ −b_ij
            let mut a = vec![Rational::zero(); nvars];
            a[i] = -Rational::one();
            a[n + i] = Rational::one();
            a[2 * n + j] = -Rational::one();
            rows.push((a, -rational(inst.bids[i][j])));
        }
    }
    // pin the objective Σπ + Σp to the optimal matching value
    let opt = inst.matching_value();
    let mut obj_row = vec![Rational::zero(); nvars];
    for i in 0..n {
        obj_row[i] = Rational::one();
    }
    for j in 0..m {
        obj_row[2 * n + j] = Rational::one();
    }
    rows.push((obj_row.clone(), opt.clone()));
    rows.push((obj_row.iter().map(|v| -v).collect(), -opt));
    (rows, nvars)
}

fn maximize_on_face(
    rows: &[(Vec<Rational>, Rational)],
    nvars: usize,
    objective: Vec<Rational>,
) -> (Rational, Vec<Rational>) {
    let lp = LinearProgram {
        var_names: (0..nvars).map(|k| format!("y{k}")).collect(),
        objective,
        constraints: rows.to_vec(),
    };
    match solve_lp(&lp) {
        LpOutcome::Optimal { value, point } => (value, point),
        other => unreachable!("dual optimal face is nonempty and bounded: {other:?}"),
    }
}

fn unit(nvars: usize, k: usize, sign: i64) -> Vec<Rational> {
    let mut c = vec![Rational::zero(); nvars];
    c[k] = Rational::from_integer(sign.into());
    c
}

fn pin(rows: &mut Vec<(Vec<Rational>, Rational)>, nvars: usize, k: usize, v: &Rational) {
    rows.push((unit(nvars, k, 1), v.clone()));
    rows.push((unit(nvars, k, -1), -v.clone()));
}

/// Optimal solution of the dual of the matching LP under the requested
/// selection rule.
pub fn solve_assignment_dual(inst: &AssignmentInstance, objective: DualObjective) -> DualPoint {
    let (n, m) = (inst.num_agents(), inst.num_items());
    let (mut rows, nvars) = dual_face_constraints(inst);
    let point = match objective {
        DualObjective::MinPoint => {
            // componentwise-largest π is the unique maximizer of Σπ
            let mut c = vec![Rational::zero(); nvars];
            for i in 0..n {
                c[i] = Rational::one();
            }
            let (_, at_max) = maximize_on_face(&rows, nvars, c);
            for i in 0..n {
                pin(&mut rows, nvars, i, &at_max[i]);
                pin(&mut rows, nvars, n + i, &Rational::zero());
            }
            // componentwise-smallest prices, coordinate by coordinate
            let mut result = at_max;
            for j in 0..m {
                let (v, _) = maximize_on_face(&rows, nvars, unit(nvars, 2 * n + j, -1));
                result[2 * n + j] = -v;
            }
            for i in 0..n {
                result[n + i] = Rational::zero();
            }
            result
        }
        DualObjective::MaxPoint => {
            let mut c = vec![Rational::zero(); nvars];
            for i in 0..n {
                c[n + i] = Rational::one();
            }
            let (_, at_max) = maximize_on_face(&rows, nvars, c);
            for i in 0..n {
                pin(&mut rows, nvars, n + i, &at_max[n + i]);
            }
            let mut result = at_max;
            for i in 0..n {
                let (v, _) = maximize_on_face(&rows, nvars, unit(nvars, i, -1));
                result[i] = -v;
                pin(&mut rows, nvars, i, &result[i]);
            }
            for j in 0..m {
                let (v, _) = maximize_on_face(&rows, nvars, unit(nvars, 2 * n + j, 1));
                result[2 * n + j] = v;
            }
            result
        }
        DualObjective::Weighted(w) => {
            assert_eq!(w.len(), nvars, "one weight per dual variable");
            let (_, point) = maximize_on_face(&rows, nvars, w);
            point
        }
    };
    DualPoint {
        pi: point[..n].to_vec(),
        mu: point[n..2 * n].to_vec(),
        prices: point[2 * n..].to_vec(),
    }
}

/// meet = (π¹∨π², μ¹∧μ², p¹∧p²), join = (π¹∧π², μ¹∨μ², p¹∨p²).
pub fn lattice_meet_join(a: &DualPoint, b: &DualPoint) -> (DualPoint, DualPoint) {
    let hi = |x: &[Rational], y: &[Rational]| -> Vec<Rational> {
        x.iter().zip(y).map(|(u, v)| u.max(v).clone()).collect()
    };
    let lo = |x: &[Rational], y: &[Rational]| -> Vec<Rational> {
        x.iter().zip(y).map(|(u, v)| u.min(v).clone()).collect()
    };
    let meet = DualPoint {
        pi: hi(&a.pi, &b.pi),
        mu: lo(&a.mu, &b.mu),
        prices: lo(&a.prices, &b.prices),
    };
    let join = DualPoint {
        pi: lo(&a.pi, &b.pi),
        mu: hi(&a.mu, &b.mu),
        prices: hi(&a.prices, &b.prices),
    };
    (meet, join)
}

/// Dual feasibility plus objective equality with the optimal matching value.
pub fn is_optimal_dual(inst: &AssignmentInstance, point: &DualPoint) -> bool {
    let (n, m) = (inst.num_agents(), inst.num_items());
    let nonneg = point.pi.iter().chain(&point.mu).chain(&point.prices).all(|v| !v.is_negative());
    if !nonneg {
        return false;
    }
    for i in 0..n {
        for j in 0..m {
            if &point.pi[i] - &point.mu[i] < rational(inst.bids[i][j]) - &point.prices[j] {
                return false;
            }
        }
    }
    let obj: Rational = point.pi.iter().sum::<Rational>() + point.prices.iter().sum::<Rational>();
    obj == inst.matching_value()
}

/// Outcome of the structural verification run.
#[derive(Debug, Clone)]
pub struct LatticeReport {
    pub pairs_checked: usize,
    pub violations: Vec<String>,
}

impl LatticeReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks, on one instance: meet/join closure over sampled optimal dual
/// pairs; min-point discounts and max-point raises equal to the VCG feedback
/// of the equivalent pod instance; and extension of the joint policy point
/// to an optimal dual through some price vector.
pub fn verify_lattice_and_extremes(
    inst: &AssignmentInstance,
    samples: usize,
    rng: &mut impl Rng,
) -> LatticeReport {
    let (n, m) = (inst.num_agents(), inst.num_items());
    let nvars = 2 * n + m;
    let mut violations = Vec::new();

    let mut points = Vec::with_capacity(samples);
    for _ in 0..samples {
        let w: Vec<Rational> = (0..nvars)
            .map(|_| Rational::from_integer(rng.gen_range(-5i64..=5).into()))
            .collect();
        points.push(solve_assignment_dual(inst, DualObjective::Weighted(w)));
    }
    let mut pairs = 0;
    for a in 0..points.len() {
        for b in a..points.len() {
            pairs += 1;
            let (meet, join) = lattice_meet_join(&points[a], &points[b]);
            if !is_optimal_dual(inst, &meet) {
                violations.push(format!("meet of samples {a},{b} is not an optimal dual"));
            }
            if !is_optimal_dual(inst, &join) {
                violations.push(format!("join of samples {a},{b} is not an optimal dual"));
            }
        }
    }

    let pod = inst.to_pod_instance();
    let bids = pod.bid_profile();
    let vcg = vcg_feedback(&pod, &bids);
    let min_pt = solve_assignment_dual(inst, DualObjective::MinPoint);
    let max_pt = solve_assignment_dual(inst, DualObjective::MaxPoint);
    if min_pt.pi != vcg.discounts {
        violations.push(format!(
            "min point discounts {:?} differ from VCG discounts {:?}",
            min_pt.pi, vcg.discounts
        ));
    }
    if max_pt.mu != vcg.raises {
        violations.push(format!(
            "max point raises {:?} differ from VCG raises {:?}",
            max_pt.mu, vcg.raises
        ));
    }
    if !is_optimal_dual(inst, &min_pt) {
        violations.push("min point is not an optimal dual".into());
    }
    if !is_optimal_dual(inst, &max_pt) {
        violations.push("max point is not an optimal dual".into());
    }

    let joint = crate::feedback::bicore_feedback(&pod, &bids);
    if !extends_to_optimal_dual(inst, &joint) {
        violations.push("joint policy point does not extend to an optimal dual".into());
    }

    LatticeReport {
        pairs_checked: pairs,
        violations,
    }
}

/// True iff some nonnegative price vector completes (π, μ) to an optimal
/// dual solution.
pub fn extends_to_optimal_dual(inst: &AssignmentInstance, fv: &FeedbackVector) -> bool {
    let (n, m) = (inst.num_agents(), inst.num_items());
    // variables: p only; p_j ≥ b_ij − π_i + μ_i and Σp = OPT − Σπ
    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let mut a = vec![Rational::zero(); m];
            a[j] = -Rational::one();
            let bound = rational(inst.bids[i][j]) - &fv.discounts[i] + &fv.raises[i];
            rows.push((a, -bound));
        }
    }
    let budget = inst.matching_value() - fv.discounts.iter().sum::<BigRational>();
    let ones = vec![Rational::one(); m];
    rows.push((ones.clone(), budget.clone()));
    rows.push((ones.iter().map(|v| -v).collect(), -budget));
    let lp = LinearProgram {
        var_names: (0..m).map(|j| format!("p{j}")).collect(),
        objective: vec![Rational::zero(); m],
        constraints: rows,
    };
    !matches!(solve_lp(&lp), LpOutcome::Infeasible)
}
