//! Exact rational linear programming: a self-contained two-phase simplex
//! with Bland's anti-cycling rule, and a staged leximin refinement used to
//! select canonical maximal feedback vectors.

use std::collections::BTreeSet;

use num::{BigRational, One, Signed, Zero};
use thiserror::Error;

pub type Rational = BigRational;

/// Maximize `objective · x` subject to `a · x <= b` per constraint and
/// `x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub var_names: Vec<String>,
    pub objective: Vec<Rational>,
    pub constraints: Vec<(Vec<Rational>, Rational)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: Rational, point: Vec<Rational> },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
}

pub fn solve_lp(lp: &LinearProgram) -> LpOutcome {
    simplex_max(&lp.objective, &lp.constraints, lp.objective.len())
}

/// Two-stage canonical point: maximize the (sum) objective, then pick the
/// leximin-maximal point on the optimal face.
pub fn leximin_max(lp: &LinearProgram) -> Result<Vec<Rational>, LpError> {
    let n = lp.objective.len();
    leximin_stages(&lp.constraints, n, &[(0..n).collect()])
}

/// Staged leximin over `a · x <= b, x >= 0`.
///
/// For each stage (a set of variable indices, processed in order): maximize
/// the stage sum, pin it, then fix the stage's variables at their leximin
/// values. Later stages optimize subject to all earlier pins. Stages must
/// partition `0..nvars`.
pub fn leximin_stages(
    constraints: &[(Vec<Rational>, Rational)],
    nvars: usize,
    stages: &[Vec<usize>],
) -> Result<Vec<Rational>, LpError> {
    let mut pinned: Vec<(Vec<Rational>, Rational)> = constraints.to_vec();
    let mut fixed: Vec<Option<Rational>> = vec![None; nvars];

    for stage in stages {
        if stage.is_empty() {
            continue;
        }
        let sum_obj = indicator(nvars, stage);
        let z = match simplex_max(&sum_obj, &pinned, nvars) {
            LpOutcome::Optimal { value, .. } => value,
            LpOutcome::Infeasible => return Err(LpError::Infeasible),
            LpOutcome::Unbounded => return Err(LpError::Unbounded),
        };
        pin_equality(&mut pinned, &sum_obj, &z);

        let mut free: BTreeSet<usize> = stage.iter().copied().collect();
        while !free.is_empty() {
            let t = max_min_over(&pinned, nvars, &free)?;
            // fix every free variable that cannot exceed t on the face
            let floor_rows: Vec<(Vec<Rational>, Rational)> = free
                .iter()
                .map(|&j| {
                    let mut a = vec![Rational::zero(); nvars];
                    a[j] = -Rational::one();
                    (a, -t.clone())
                })
                .collect();
            let mut with_floors = pinned.clone();
            with_floors.extend(floor_rows);
            let mut newly_fixed = Vec::new();
            for &i in &free {
                let obj = indicator(nvars, &[i]);
                match simplex_max(&obj, &with_floors, nvars) {
                    LpOutcome::Optimal { value, .. } => {
                        if value == t {
                            newly_fixed.push(i);
                        }
                    }
                    LpOutcome::Infeasible => return Err(LpError::Infeasible),
                    LpOutcome::Unbounded => return Err(LpError::Unbounded),
                }
            }
            assert!(
                !newly_fixed.is_empty(),
                "leximin level must saturate at least one variable"
            );
            for i in newly_fixed {
                fixed[i] = Some(t.clone());
                pin_equality(&mut pinned, &indicator(nvars, &[i]), &t);
                free.remove(&i);
            }
        }
    }

    fixed
        .into_iter()
        .map(|v| v.ok_or(LpError::Infeasible))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| panic!("stages must cover every variable"))
}

fn indicator(nvars: usize, vars: &[usize]) -> Vec<Rational> {
    let mut c = vec![Rational::zero(); nvars];
    for &i in vars {
        c[i] = Rational::one();
    }
    c
}

fn pin_equality(rows: &mut Vec<(Vec<Rational>, Rational)>, a: &[Rational], b: &Rational) {
    rows.push((a.to_vec(), b.clone()));
    rows.push((a.iter().map(|v| -v).collect(), -b.clone()));
}

/// max t subject to the rows plus `x_i >= t` for all free variables.
fn max_min_over(
    rows: &[(Vec<Rational>, Rational)],
    nvars: usize,
    free: &BTreeSet<usize>,
) -> Result<Rational, LpError> {
    // extended program over (x, t); t is variable index nvars
    let mut ext: Vec<(Vec<Rational>, Rational)> = rows
        .iter()
        .map(|(a, b)| {
            let mut row = a.clone();
            row.push(Rational::zero());
            (row, b.clone())
        })
        .collect();
    for &i in free {
        let mut row = vec![Rational::zero(); nvars + 1];
        row[i] = -Rational::one();
        row[nvars] = Rational::one();
        ext.push((row, Rational::zero()));
    }
    let mut obj = vec![Rational::zero(); nvars + 1];
    obj[nvars] = Rational::one();
    match simplex_max(&obj, &ext, nvars + 1) {
        LpOutcome::Optimal { value, .. } => Ok(value),
        LpOutcome::Infeasible => Err(LpError::Infeasible),
        LpOutcome::Unbounded => Err(LpError::Unbounded),
    }
}

// ---------------------------------------------------------------------------
// Two-phase tableau simplex
// ---------------------------------------------------------------------------

struct Tableau {
    /// rows[i] has `ncols` coefficients followed by the rhs
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> &Rational {
        &self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v /= &piv;
        }
        for i in 0..self.rows.len() {
            if i != r && !self.rows[i][c].is_zero() {
                let factor = self.rows[i][c].clone();
                for k in 0..=self.ncols {
                    let delta = &factor * &self.rows[r][k];
                    self.rows[i][k] -= delta;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Primal simplex iterations with Bland's rule for `max cost · x` over
    /// the current canonical tableau. Returns false on unboundedness.
    fn optimize(&mut self, cost: &[Rational]) -> bool {
        loop {
            // reduced costs: c_j - c_B · col_j
            let mut entering = None;
            for j in 0..self.ncols {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j].clone();
                for (i, &b) in self.basis.iter().enumerate() {
                    if !cost[b].is_zero() && !self.rows[i][j].is_zero() {
                        rc -= &cost[b] * &self.rows[i][j];
                    }
                }
                if rc.is_positive() {
                    entering = Some(j);
                    break; // Bland: smallest improving index
                }
            }
            let Some(j) = entering else {
                return true;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for i in 0..self.rows.len() {
                if self.rows[i][j].is_positive() {
                    let ratio = self.rhs(i) / &self.rows[i][j];
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return false;
            };
            self.pivot(r, j);
        }
    }

    fn point(&self, nvars: usize) -> Vec<Rational> {
        let mut x = vec![Rational::zero(); nvars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < nvars {
                x[b] = self.rhs(i).clone();
            }
        }
        x
    }
}

fn simplex_max(
    objective: &[Rational],
    constraints: &[(Vec<Rational>, Rational)],
    nvars: usize,
) -> LpOutcome {
    let m = constraints.len();
    let mut artificial_rows = Vec::new();
    for (i, (_, b)) in constraints.iter().enumerate() {
        if b.is_negative() {
            artificial_rows.push(i);
        }
    }
    let n_art = artificial_rows.len();
    let ncols = nvars + m + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art_index = 0usize;
    for (i, (a, b)) in constraints.iter().enumerate() {
        let mut row = vec![Rational::zero(); ncols + 1];
        let negate = b.is_negative();
        for (j, v) in a.iter().enumerate() {
            row[j] = if negate { -v } else { v.clone() };
        }
        row[nvars + i] = if negate { -Rational::one() } else { Rational::one() };
        row[ncols] = if negate { -b } else { b.clone() };
        if negate {
            let art_col = nvars + m + art_index;
            art_index += 1;
            row[art_col] = Rational::one();
            basis.push(art_col);
        } else {
            basis.push(nvars + i);
        }
        rows.push(row);
    }
    let mut tab = Tableau { rows, basis, ncols };

    if n_art > 0 {
        let mut phase1 = vec![Rational::zero(); ncols];
        for k in 0..n_art {
            phase1[nvars + m + k] = -Rational::one();
        }
        // canonicalize: artificial basis columns already identity
        if !tab.optimize(&phase1) {
            unreachable!("phase 1 objective is bounded");
        }
        let infeas: Rational = tab
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= nvars + m)
            .map(|(i, _)| tab.rhs(i).clone())
            .sum();
        if !infeas.is_zero() {
            return LpOutcome::Infeasible;
        }
        // drive remaining degenerate artificials out of the basis
        let mut drop_rows = Vec::new();
        for i in 0..tab.rows.len() {
            if tab.basis[i] >= nvars + m {
                let col = (0..nvars + m).find(|&j| !tab.rows[i][j].is_zero());
                match col {
                    Some(j) => tab.pivot(i, j),
                    None => drop_rows.push(i),
                }
            }
        }
        for &i in drop_rows.iter().rev() {
            tab.rows.remove(i);
            tab.basis.remove(i);
        }
        // remove artificial columns so phase 2 cannot pivot them back in
        for row in tab.rows.iter_mut() {
            let rhs = row[tab.ncols].clone();
            row.truncate(nvars + m);
            row.push(rhs);
        }
        tab.ncols = nvars + m;
    }

    let mut phase2 = vec![Rational::zero(); ncols];
    phase2[..nvars].clone_from_slice(&objective[..nvars]);
    if !tab.optimize(&phase2) {
        return LpOutcome::Unbounded;
    }
    let point = tab.point(nvars);
    let value = objective
        .iter()
        .zip(&point)
        .map(|(c, x)| c * x)
        .sum();
    LpOutcome::Optimal { value, point }
}
