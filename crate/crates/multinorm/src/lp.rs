//! Dense two-phase simplex for the small linear programs the library
//! generates: gauge evaluations, minimum-norm preimages, epigraph
//! formulations of operator-norm minimization, and polygon inradii.
//!
//! Bland's pivoting rule is used throughout, so the solver is
//! deterministic and cannot cycle. Problems here are desk scale
//! (at most a few thousand variables), so a dense tableau is adequate.

use thiserror::Error;

/// Handle for a variable registered with [`LinearProgram`].
pub type VarId = usize;

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-1 optimum {0:.3e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone)]
struct Constraint {
    terms: Vec<(VarId, f64)>,
    rel: Rel,
    rhs: f64,
}

/// Minimization problem builder. Variables are nonnegative unless
/// registered with [`LinearProgram::free_var`].
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    n_vars: usize,
    free: Vec<bool>,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

/// Optimal point returned by [`LinearProgram::solve`].
#[derive(Debug, Clone)]
pub struct Solution {
    values: Vec<f64>,
    objective: f64,
}

impl Solution {
    pub fn value(&self, v: VarId) -> f64 {
        self.values[v]
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }
}

const EPS_PIVOT: f64 = 1e-11;
const EPS_COST: f64 = 1e-10;
const EPS_FEAS: f64 = 1e-8;
const MAX_ITER: usize = 200_000;

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a nonnegative variable with objective coefficient `cost`.
    pub fn nonneg_var(&mut self, cost: f64) -> VarId {
        self.n_vars += 1;
        self.free.push(false);
        self.objective.push(cost);
        self.n_vars - 1
    }

    /// Register a sign-unconstrained variable with objective coefficient `cost`.
    pub fn free_var(&mut self, cost: f64) -> VarId {
        self.n_vars += 1;
        self.free.push(true);
        self.objective.push(cost);
        self.n_vars - 1
    }

    pub fn constraint(&mut self, terms: Vec<(VarId, f64)>, rel: Rel, rhs: f64) {
        self.constraints.push(Constraint { terms, rel, rhs });
    }

    /// Solve `min c^T x`. Returns the optimal point (a vertex of the
    /// standard-form polyhedron, deterministic under Bland's rule).
    pub fn solve(&self) -> Result<Solution, LpError> {
        // Lower to standard form: free variables split into x+ - x-,
        // inequality rows get slack columns, rows are sign-normalized.
        let mut col_of_var = Vec::with_capacity(self.n_vars);
        let mut neg_col_of_var = vec![usize::MAX; self.n_vars];
        let mut ncols = 0usize;
        for v in 0..self.n_vars {
            col_of_var.push(ncols);
            ncols += 1;
            if self.free[v] {
                neg_col_of_var[v] = ncols;
                ncols += 1;
            }
        }
        let n_struct = ncols;
        let n_slack = self
            .constraints
            .iter()
            .filter(|c| c.rel != Rel::Eq)
            .count();
        ncols += n_slack;

        let m = self.constraints.len();
        let n_art = m;
        let total = ncols + n_art;
        // Dense row-major tableau, one extra column for the rhs.
        let width = total + 1;
        let mut t = vec![0.0f64; (m + 1) * width];
        let idx = |r: usize, c: usize| r * width + c;

        let mut slack_cursor = n_struct;
        for (r, con) in self.constraints.iter().enumerate() {
            for &(v, a) in &con.terms {
                t[idx(r, col_of_var[v])] += a;
                if self.free[v] {
                    t[idx(r, neg_col_of_var[v])] -= a;
                }
            }
            match con.rel {
                Rel::Le => {
                    t[idx(r, slack_cursor)] = 1.0;
                    slack_cursor += 1;
                }
                Rel::Ge => {
                    t[idx(r, slack_cursor)] = -1.0;
                    slack_cursor += 1;
                }
                Rel::Eq => {}
            }
            t[idx(r, total)] = con.rhs;
            if t[idx(r, total)] < 0.0 {
                for c in 0..=total {
                    t[idx(r, c)] = -t[idx(r, c)];
                }
            }
        }

        // Artificial identity basis.
        let mut basis = vec![0usize; m];
        for r in 0..m {
            t[idx(r, ncols + r)] = 1.0;
            basis[r] = ncols + r;
        }

        // Phase 1: minimize the sum of artificials. Reduced costs are the
        // negated column sums of the constraint rows.
        for c in 0..=total {
            let mut s = 0.0;
            for r in 0..m {
                s += t[idx(r, c)];
            }
            t[idx(m, c)] = -s;
        }
        for r in 0..m {
            t[idx(m, ncols + r)] = 0.0;
        }
        Self::pivot_loop(&mut t, m, total, width, &mut basis, total)?;
        let phase1 = -t[idx(m, total)];
        if phase1 > EPS_FEAS {
            return Err(LpError::Infeasible(phase1));
        }

        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if basis[r] >= ncols {
                if let Some(c) = (0..ncols).find(|&c| t[idx(r, c)].abs() > EPS_PIVOT) {
                    Self::pivot(&mut t, m, width, r, c);
                    basis[r] = c;
                }
            }
        }

        // Phase 2: install the real objective and price out the basis.
        for c in 0..=total {
            t[idx(m, c)] = 0.0;
        }
        for v in 0..self.n_vars {
            t[idx(m, col_of_var[v])] = self.objective[v];
            if self.free[v] {
                t[idx(m, neg_col_of_var[v])] = -self.objective[v];
            }
        }
        for r in 0..m {
            let b = basis[r];
            let cb = t[idx(m, b)];
            if cb != 0.0 {
                for c in 0..=total {
                    t[idx(m, c)] -= cb * t[idx(r, c)];
                }
            }
        }
        // Artificial columns may not re-enter.
        Self::pivot_loop(&mut t, m, total, width, &mut basis, ncols)?;

        let mut x = vec![0.0f64; total];
        for r in 0..m {
            if basis[r] < total {
                x[basis[r]] = t[idx(r, total)];
            }
        }
        let mut values = vec![0.0f64; self.n_vars];
        let mut objective = 0.0;
        for v in 0..self.n_vars {
            let mut val = x[col_of_var[v]];
            if self.free[v] {
                val -= x[neg_col_of_var[v]];
            }
            values[v] = val;
            objective += self.objective[v] * val;
        }
        Ok(Solution { values, objective })
    }

    /// Bland-rule simplex iterations on the tableau. Columns with index
    /// `>= enterable` are excluded from entering the basis.
    fn pivot_loop(
        t: &mut [f64],
        m: usize,
        total: usize,
        width: usize,
        basis: &mut [usize],
        enterable: usize,
    ) -> Result<(), LpError> {
        let idx = |r: usize, c: usize| r * width + c;
        for _ in 0..MAX_ITER {
            let mut entering = None;
            for c in 0..enterable {
                if t[idx(m, c)] < -EPS_COST {
                    entering = Some(c);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = t[idx(r, col)];
                if a > EPS_PIVOT {
                    let ratio = t[idx(r, total)] / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            // Bland tie-break: smallest basis index.
                            if ratio < lratio - EPS_PIVOT
                                || (ratio < lratio + EPS_PIVOT && basis[r] < basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            Self::pivot(t, m, width, row, col);
            basis[row] = col;
        }
        Err(LpError::IterationLimit)
    }

    fn pivot(t: &mut [f64], m: usize, width: usize, row: usize, col: usize) {
        let idx = |r: usize, c: usize| r * width + c;
        let p = t[idx(row, col)];
        for c in 0..width {
            t[idx(row, c)] /= p;
        }
        for r in 0..=m {
            if r == row {
                continue;
            }
            let f = t[idx(r, col)];
            if f != 0.0 {
                for c in 0..width {
                    t[idx(r, c)] -= f * t[idx(row, c)];
                }
            }
        }
        // Clean the pivot column to avoid drift.
        for r in 0..=m {
            t[idx(r, col)] = if r == row { 1.0 } else { 0.0 };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_minimization() {
        // min |x| + |y| s.t. x + y = 1 -> 1
        let mut lp = LinearProgram::new();
        let xp = lp.nonneg_var(1.0);
        let xm = lp.nonneg_var(1.0);
        let yp = lp.nonneg_var(1.0);
        let ym = lp.nonneg_var(1.0);
        lp.constraint(
            vec![(xp, 1.0), (xm, -1.0), (yp, 1.0), (ym, -1.0)],
            Rel::Eq,
            1.0,
        );
        let s = lp.solve().unwrap();
        assert!((s.objective() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classic_max_as_min() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36
        let mut lp = LinearProgram::new();
        let x = lp.nonneg_var(-3.0);
        let y = lp.nonneg_var(-5.0);
        lp.constraint(vec![(x, 1.0)], Rel::Le, 4.0);
        lp.constraint(vec![(y, 2.0)], Rel::Le, 12.0);
        lp.constraint(vec![(x, 3.0), (y, 2.0)], Rel::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!((s.objective() + 36.0).abs() < 1e-9);
        assert!((s.value(x) - 2.0).abs() < 1e-9);
        assert!((s.value(y) - 6.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = LinearProgram::new();
        let x = lp.nonneg_var(1.0);
        lp.constraint(vec![(x, 1.0)], Rel::Le, 1.0);
        lp.constraint(vec![(x, 1.0)], Rel::Ge, 2.0);
        assert!(matches!(lp.solve(), Err(LpError::Infeasible(_))));
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new();
        let x = lp.free_var(1.0);
        lp.constraint(vec![(x, 1.0)], Rel::Le, 0.0);
        assert!(matches!(lp.solve(), Err(LpError::Unbounded)));
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x s.t. x + y = 2, y <= 1, x free, y >= 0 -> x = 1
        let mut lp = LinearProgram::new();
        let x = lp.free_var(1.0);
        let y = lp.nonneg_var(0.0);
        lp.constraint(vec![(x, 1.0), (y, 1.0)], Rel::Eq, 2.0);
        lp.constraint(vec![(y, 1.0)], Rel::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.value(x) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_symmetric_gauge() {
        // Gauge of (1,1) in the cross-polytope hull{±e1, ±e2}: highly
        // degenerate symmetric data; Bland must terminate.
        let mut lp = LinearProgram::new();
        let lam: Vec<VarId> = (0..4).map(|_| lp.nonneg_var(1.0)).collect();
        // columns e1, -e1, e2, -e2
        lp.constraint(vec![(lam[0], 1.0), (lam[1], -1.0)], Rel::Eq, 1.0);
        lp.constraint(vec![(lam[2], 1.0), (lam[3], -1.0)], Rel::Eq, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.objective() - 2.0).abs() < 1e-12);
    }

    /// Brute-force oracle: enumerate all bases of the standard-form
    /// program min c x, A x = b, x >= 0 and return the best feasible
    /// vertex value.
    fn brute_force_std(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
        let m = a.len();
        let n = c.len();
        let mut best: Option<f64> = None;
        let mut cols = vec![0usize; m];
        fn rec(
            a: &[Vec<f64>],
            b: &[f64],
            c: &[f64],
            cols: &mut Vec<usize>,
            start: usize,
            depth: usize,
            best: &mut Option<f64>,
        ) {
            let m = a.len();
            if depth == m {
                // Solve the m x m system for the basic variables.
                let mut mat = nalgebra::DMatrix::zeros(m, m);
                for (j, &cj) in cols.iter().enumerate() {
                    for i in 0..m {
                        mat[(i, j)] = a[i][cj];
                    }
                }
                let rhs = nalgebra::DVector::from_column_slice(b);
                if let Some(sol) = mat.lu().solve(&rhs) {
                    if sol.iter().all(|&v| v >= -1e-9) {
                        let val: f64 = cols.iter().zip(sol.iter()).map(|(&j, &v)| c[j] * v).sum();
                        if best.is_none() || val < best.unwrap() - 1e-12 {
                            *best = Some(val);
                        }
                    }
                }
                return;
            }
            for j in start..c.len() {
                cols[depth] = j;
                rec(a, b, c, cols, j + 1, depth + 1, best);
            }
        }
        rec(a, b, c, &mut cols, 0, 0, &mut best);
        let _ = n;
        best
    }

    #[test]
    fn random_instances_match_vertex_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let m = rng.gen_range(1..=3);
            let n = rng.gen_range(m..=6);
            let a: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..m)
                .map(|i| (0..n).map(|j| a[i][j] * x0[j]).sum())
                .collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();

            let mut lp = LinearProgram::new();
            let vars: Vec<VarId> = c.iter().map(|&cj| lp.nonneg_var(cj)).collect();
            for i in 0..m {
                lp.constraint(
                    (0..n).map(|j| (vars[j], a[i][j])).collect(),
                    Rel::Eq,
                    b[i],
                );
            }
            let got = lp.solve().unwrap().objective();
            let want = brute_force_std(&a, &b, &c).expect("feasible by construction");
            assert!(
                (got - want).abs() <= 1e-7 * (1.0 + want.abs()),
                "simplex {got} vs oracle {want}"
            );
        }
    }
}
