//! Exact solver for small dense linear programs.
//!
//! Two-phase primal simplex on a dense tableau with Bland's rule, so
//! solves are deterministic and cycle-free. Free variables are split,
//! shifted lower bounds are substituted out, and finite upper bounds
//! become explicit rows. Duals are recovered from the final basis by a
//! dense solve of `Bᵀy = c_B` over the untouched initial columns.
//!
//! Intended for the small programs this crate generates (restricted
//! masters, enumeration benchmarks); there is no sparse path.

use crate::{Error, Result};

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Constraint relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// One linear constraint `coeffs · x (rel) rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A dense linear program. Variable bounds default to `[0, +inf)`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn push_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    /// Marks a variable as free (unbounded both ways).
    pub fn set_free(&mut self, var: usize) {
        self.bounds[var] = (f64::NEG_INFINITY, f64::INFINITY);
    }

    fn nonzeros(&self) -> usize {
        self.constraints
            .iter()
            .map(|c| c.coeffs.iter().filter(|a| **a != 0.0).count())
            .sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.bounds.len() != n {
            return Err(Error::invalid("bounds length mismatch"));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("objective coefficients must be finite"));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::invalid(format!(
                    "constraint {k} has {} coefficients, expected {n}",
                    c.coeffs.len()
                )));
            }
            if c.coeffs.iter().any(|a| !a.is_finite()) || !c.rhs.is_finite() {
                return Err(Error::invalid(format!(
                    "constraint {k} has non-finite data"
                )));
            }
        }
        for (k, (l, u)) in self.bounds.iter().enumerate() {
            if l > u {
                return Err(Error::invalid(format!(
                    "variable {k} has empty bound range"
                )));
            }
            if l.is_nan() || u.is_nan() {
                return Err(Error::invalid(format!("variable {k} has NaN bounds")));
            }
        }
        Ok(())
    }
}

/// Values at an optimal vertex.
#[derive(Debug, Clone)]
pub struct OptimalLp {
    pub primal: Vec<f64>,
    /// One dual per constraint, signed so that for a maximization with
    /// `<=` rows (or a minimization with `>=` rows) duals are
    /// nonnegative and `objective = duals · rhs` when all variable
    /// bounds are the default `[0, inf)`.
    pub duals: Vec<f64>,
    pub objective: f64,
}

/// Solver outcome.
#[derive(Debug, Clone)]
pub enum LpSolution {
    Optimal(OptimalLp),
    Infeasible,
    Unbounded,
}

impl LpSolution {
    pub fn optimal(&self) -> Option<&OptimalLp> {
        match self {
            LpSolution::Optimal(o) => Some(o),
            _ => None,
        }
    }

    pub fn expect_optimal(&self, what: &str) -> Result<&OptimalLp> {
        self.optimal()
            .ok_or_else(|| Error::invalid(format!("{what}: expected an optimal LP solution")))
    }
}

/// Default cap on constraint-matrix nonzeros accepted by [`solve`].
pub const DEFAULT_NONZERO_CAP: usize = 10_000;

const TOL_PIVOT: f64 = 1e-9;
const TOL_COST: f64 = 1e-9;

/// Solves with the default size cap.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    solve_with_limit(lp, DEFAULT_NONZERO_CAP)
}

/// Solves a dense LP, refusing programs above `max_nonzeros`.
pub fn solve_with_limit(lp: &LinearProgram, max_nonzeros: usize) -> Result<LpSolution> {
    lp.validate()?;
    if lp.nonzeros() > max_nonzeros {
        return Err(Error::invalid(format!(
            "LP has {} nonzeros, cap is {max_nonzeros}",
            lp.nonzeros()
        )));
    }
    Ok(Simplex::build(lp).run())
}

enum VarMap {
    /// x = l + z
    Shift { col: usize, l: f64 },
    /// x = u - z
    Negated { col: usize, u: f64 },
    /// x = z_pos - z_neg
    Split { pos: usize, neg: usize },
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n_cols: usize,
    artificial_start: usize,
    /// Initial column data, kept pristine for dual recovery.
    a0: Vec<Vec<f64>>,
    /// Working tableau rows (m x n_cols) and rhs.
    t: Vec<Vec<f64>>,
    b: Vec<f64>,
    basic: Vec<usize>,
    /// Phase-2 costs per column (min sense).
    cost: Vec<f64>,
    row_sign: Vec<f64>,
    n_orig_rows: usize,
    var_map: Vec<VarMap>,
}

impl<'a> Simplex<'a> {
    fn build(lp: &'a LinearProgram) -> Self {
        let n = lp.objective.len();
        let sense_mul = match lp.sense {
            Sense::Maximize => -1.0,
            Sense::Minimize => 1.0,
        };

        // Substitute bounded variables out. Structural z-columns first.
        let mut var_map = Vec::with_capacity(n);
        let mut n_z = 0usize;
        let mut bound_rows: Vec<(usize, f64)> = Vec::new(); // (z col, ub)
        for (j, &(l, u)) in lp.bounds.iter().enumerate() {
            if l.is_finite() {
                let col = n_z;
                n_z += 1;
                if u.is_finite() {
                    bound_rows.push((col, u - l));
                }
                var_map.push(VarMap::Shift { col, l });
            } else if u.is_finite() {
                let col = n_z;
                n_z += 1;
                var_map.push(VarMap::Negated { col, u });
            } else {
                let pos = n_z;
                let neg = n_z + 1;
                n_z += 2;
                var_map.push(VarMap::Split { pos, neg });
            }
            let _ = j;
        }

        let n_orig_rows = lp.constraints.len();
        let m = n_orig_rows + bound_rows.len();

        // Row data in z-space before normalization.
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
        for c in &lp.constraints {
            let mut coeffs = vec![0.0; n_z];
            let mut rhs = c.rhs;
            for (j, &a) in c.coeffs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match var_map[j] {
                    VarMap::Shift { col, l } => {
                        coeffs[col] += a;
                        rhs -= a * l;
                    }
                    VarMap::Negated { col, u } => {
                        coeffs[col] -= a;
                        rhs -= a * u;
                    }
                    VarMap::Split { pos, neg } => {
                        coeffs[pos] += a;
                        coeffs[neg] -= a;
                    }
                }
            }
            rows.push((coeffs, c.relation, rhs));
        }
        for &(col, ub) in &bound_rows {
            let mut coeffs = vec![0.0; n_z];
            coeffs[col] = 1.0;
            rows.push((coeffs, Relation::Le, ub));
        }

        // Normalize rhs >= 0.
        let mut row_sign = vec![1.0; m];
        for (i, (coeffs, rel, rhs)) in rows.iter_mut().enumerate() {
            if *rhs < 0.0 {
                row_sign[i] = -1.0;
                *rhs = -*rhs;
                for a in coeffs.iter_mut() {
                    *a = -*a;
                }
                *rel = match *rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }

        // Column layout: z | slack/surplus | artificials.
        let mut n_slack = 0usize;
        for (_, rel, _) in &rows {
            if !matches!(rel, Relation::Eq) {
                n_slack += 1;
            }
        }
        let mut n_art = 0usize;
        for (_, rel, _) in &rows {
            if !matches!(rel, Relation::Le) {
                n_art += 1;
            }
        }
        let artificial_start = n_z + n_slack;
        let n_cols = artificial_start + n_art;

        let mut t = vec![vec![0.0; n_cols]; m];
        let mut b = vec![0.0; m];
        let mut basic = vec![usize::MAX; m];
        let mut slack_idx = n_z;
        let mut art_idx = artificial_start;
        for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
            t[i][..n_z].copy_from_slice(coeffs);
            b[i] = *rhs;
            match rel {
                Relation::Le => {
                    t[i][slack_idx] = 1.0;
                    basic[i] = slack_idx;
                    slack_idx += 1;
                }
                Relation::Ge => {
                    t[i][slack_idx] = -1.0;
                    slack_idx += 1;
                    t[i][art_idx] = 1.0;
                    basic[i] = art_idx;
                    art_idx += 1;
                }
                Relation::Eq => {
                    t[i][art_idx] = 1.0;
                    basic[i] = art_idx;
                    art_idx += 1;
                }
            }
        }

        let mut cost = vec![0.0; n_cols];
        for (j, &c) in lp.objective.iter().enumerate() {
            match var_map[j] {
                VarMap::Shift { col, .. } => cost[col] += sense_mul * c,
                VarMap::Negated { col, .. } => cost[col] -= sense_mul * c,
                VarMap::Split { pos, neg } => {
                    cost[pos] += sense_mul * c;
                    cost[neg] -= sense_mul * c;
                }
            }
        }

        let a0 = t.clone();

        Simplex {
            lp,
            m,
            n_cols,
            artificial_start,
            a0,
            t,
            b,
            basic,
            cost,
            row_sign,
            n_orig_rows,
            var_map,
        }
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut r = cost[j];
        for i in 0..self.m {
            let cb = cost[self.basic[i]];
            if cb != 0.0 {
                r -= cb * self.t[i][j];
            }
        }
        r
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.t[r][j];
        for a in self.t[r].iter_mut() {
            *a /= p;
        }
        self.b[r] /= p;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i][j];
            if f == 0.0 {
                continue;
            }
            for k in 0..self.n_cols {
                let upd = self.t[r][k] * f;
                self.t[i][k] -= upd;
            }
            self.b[i] -= self.b[r] * f;
            if self.b[i] < 0.0 && self.b[i] > -1e-12 {
                self.b[i] = 0.0;
            }
        }
        self.basic[r] = j;
    }

    /// Bland's rule iteration for `min cost`. Columns at or beyond
    /// `col_limit` may not enter. Returns false on unboundedness.
    fn iterate(&mut self, cost: &[f64], col_limit: usize) -> std::result::Result<(), Unbounded> {
        loop {
            let mut entering = None;
            for j in 0..col_limit {
                if self.basic.contains(&j) {
                    continue;
                }
                if self.reduced_cost(cost, j) < -TOL_COST {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                return Ok(());
            };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i][j];
                if a > TOL_PIVOT {
                    let ratio = self.b[i] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12
                                || ((ratio - br).abs() <= 1e-12 && self.basic[i] < self.basic[bi])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Unbounded);
            };
            self.pivot(r, j);
        }
    }

    fn run(mut self) -> LpSolution {
        // Phase 1: drive artificials to zero.
        if self.artificial_start < self.n_cols {
            let mut phase1 = vec![0.0; self.n_cols];
            for c in phase1.iter_mut().skip(self.artificial_start) {
                *c = 1.0;
            }
            if self.iterate(&phase1, self.n_cols).is_err() {
                // Phase-1 objective is bounded below by zero; cannot happen.
                return LpSolution::Infeasible;
            }
            let infeas: f64 = (0..self.m)
                .filter(|&i| self.basic[i] >= self.artificial_start)
                .map(|i| self.b[i])
                .sum();
            let scale = 1.0 + self.b.iter().cloned().fold(0.0, f64::max);
            if infeas > 1e-8 * scale {
                return LpSolution::Infeasible;
            }
            // Pivot out any artificial stuck in the basis at zero.
            for r in 0..self.m {
                if self.basic[r] >= self.artificial_start {
                    if let Some(j) = (0..self.artificial_start)
                        .find(|&j| self.t[r][j].abs() > 1e-7 && !self.basic.contains(&j))
                    {
                        self.pivot(r, j);
                    }
                    // Otherwise the row is redundant; the artificial
                    // stays basic at zero and its phase-2 cost is zero.
                }
            }
        }

        let cost = self.cost.clone();
        if self.iterate(&cost, self.artificial_start).is_err() {
            return LpSolution::Unbounded;
        }

        // Recover primal in z-space, then original variables.
        let mut z = vec![0.0; self.n_cols];
        for i in 0..self.m {
            z[self.basic[i]] = self.b[i];
        }
        let primal: Vec<f64> = self
            .var_map
            .iter()
            .map(|vm| match *vm {
                VarMap::Shift { col, l } => l + z[col],
                VarMap::Negated { col, u } => u - z[col],
                VarMap::Split { pos, neg } => z[pos] - z[neg],
            })
            .collect();
        let objective: f64 = self
            .lp
            .objective
            .iter()
            .zip(&primal)
            .map(|(c, x)| c * x)
            .sum();

        let duals = self.recover_duals();
        LpSolution::Optimal(OptimalLp {
            primal,
            duals,
            objective,
        })
    }

    /// Solves `Bᵀ y = c_B` over the pristine standard-form columns of
    /// the final basis, then maps row duals back through normalization
    /// and sense.
    fn recover_duals(&self) -> Vec<f64> {
        let m = self.m;
        if m == 0 {
            return Vec::new();
        }
        // bt[i][k] = a0[i][basic[k]] transposed into (Bᵀ)[k][i].
        let mut bt = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        for (k, &col) in self.basic.iter().enumerate() {
            for (i, row) in self.a0.iter().enumerate() {
                bt[k][i] = row[col];
            }
            rhs[k] = if col >= self.artificial_start {
                0.0
            } else {
                self.cost[col]
            };
        }
        let y = solve_dense(bt, rhs);
        let sense_mul = match self.lp.sense {
            Sense::Maximize => -1.0,
            Sense::Minimize => 1.0,
        };
        (0..self.n_orig_rows)
            .map(|i| sense_mul * self.row_sign[i] * y[i])
            .collect()
    }
}

struct Unbounded;

/// Gaussian elimination with partial pivoting; the basis matrix is
/// nonsingular by construction.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        if p.abs() < 1e-14 {
            continue; // singular direction; leave component zero
        }
        for i in col + 1..n {
            let f = a[i][col] / p;
            if f == 0.0 {
                continue;
            }
            let (head, tail) = a.split_at_mut(i);
            let (pivot_row, row) = (&head[col], &mut tail[0]);
            for k in col..n {
                row[k] -= pivot_row[k] * f;
            }
            b[i] -= b[col] * f;
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = if a[col][col].abs() < 1e-14 {
            0.0
        } else {
            s / a[col][col]
        };
    }
    x
}
