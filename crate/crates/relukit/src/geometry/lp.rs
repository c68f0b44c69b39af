//! Dense two-phase simplex for the tiny linear programs behind region
//! feasibility, Chebyshev centers and facet dimension checks.
//!
//! Problems here have at most a few dozen variables and constraints, so a
//! textbook tableau with Bland's rule is plenty. Free variables are split
//! into positive and negative parts internally.

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-10;
const FEAS_EPS: f64 = 1e-9;

/// One inequality `coeffs . z <= rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Constraint { coeffs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// Maximize `objective . z` subject to the constraints. The first `n_free`
/// variables are unrestricted in sign; the remaining ones must be >= 0.
pub fn maximize(objective: &[f64], constraints: &[Constraint], n_free: usize) -> LpResult {
    let n = objective.len();
    assert!(n_free <= n);
    // Column layout after splitting: free var i -> columns 2i, 2i+1 (plus/minus),
    // then the sign-constrained variables.
    let nv = n + n_free;
    let split = |row: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(nv);
        for (i, &c) in row.iter().enumerate().take(n_free) {
            let _ = i;
            out.push(c);
            out.push(-c);
        }
        out.extend_from_slice(&row[n_free..]);
        out
    };

    let m = constraints.len();
    let mut tab = Tableau::new(nv, m);
    for (i, c) in constraints.iter().enumerate() {
        assert_eq!(c.coeffs.len(), n);
        tab.set_row(i, &split(&c.coeffs), c.rhs);
    }
    match tab.solve(&split(objective)) {
        Status::Infeasible => LpResult::Infeasible,
        Status::Unbounded => LpResult::Unbounded,
        Status::Optimal => {
            let raw = tab.primal();
            let mut x = Vec::with_capacity(n);
            for i in 0..n_free {
                x.push(raw[2 * i] - raw[2 * i + 1]);
            }
            x.extend_from_slice(&raw[2 * n_free..]);
            let objective = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            LpResult::Optimal { x, objective }
        }
    }
}

enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

struct Tableau {
    nv: usize,
    m: usize,
    // rows[i] holds the structural + slack + artificial coefficients, then rhs.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    n_art: usize,
}

impl Tableau {
    fn new(nv: usize, m: usize) -> Self {
        Tableau {
            nv,
            m,
            rows: vec![vec![0.0; nv]; m],
            rhs: vec![0.0; m],
            basis: vec![0; m],
            n_art: 0,
        }
    }

    fn set_row(&mut self, i: usize, coeffs: &[f64], rhs: f64) {
        self.rows[i].copy_from_slice(coeffs);
        self.rhs[i] = rhs;
    }

    /// Total column count: structural vars + slacks + artificials.
    fn ncols(&self) -> usize {
        self.nv + self.m + self.n_art
    }

    fn solve(&mut self, objective: &[f64]) -> Status {
        // Append slack columns; negate rows with negative rhs and add
        // artificials for them.
        let mut art_rows = Vec::new();
        for i in 0..self.m {
            if self.rhs[i] < 0.0 {
                for v in self.rows[i].iter_mut() {
                    *v = -*v;
                }
                self.rhs[i] = -self.rhs[i];
                art_rows.push((i, -1.0));
            } else {
                art_rows.push((i, 1.0));
            }
        }
        self.n_art = art_rows.iter().filter(|(_, s)| *s < 0.0).count();
        let ncols = self.ncols();
        let mut art_idx = self.nv + self.m;
        for (i, sign) in &art_rows {
            let i = *i;
            self.rows[i].resize(ncols, 0.0);
            self.rows[i][self.nv + i] = *sign; // slack (negated with the row if needed)
            if *sign < 0.0 {
                self.rows[i][art_idx] = 1.0;
                self.basis[i] = art_idx;
                art_idx += 1;
            } else {
                self.basis[i] = self.nv + i;
            }
        }

        if self.n_art > 0 {
            // Phase 1: maximize -(sum of artificials).
            let mut cost = vec![0.0; ncols];
            for j in (self.nv + self.m)..ncols {
                cost[j] = -1.0;
            }
            let mut value = 0.0;
            // Make reduced costs of the basic artificials zero.
            for i in 0..self.m {
                if self.basis[i] >= self.nv + self.m {
                    for j in 0..ncols {
                        cost[j] += self.rows[i][j];
                    }
                    value += self.rhs[i];
                }
            }
            if !self.pivot_loop(&mut cost) {
                return Status::Unbounded; // phase 1 is bounded; defensive
            }
            // Objective value of phase 1 = -(sum of artificials) + value offset.
            let attained: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.nv + self.m)
                .map(|i| self.rhs[i])
                .sum();
            if attained > FEAS_EPS {
                return Status::Infeasible;
            }
            let _ = value;
            self.expel_artificials();
        }

        // Phase 2.
        let ncols = self.ncols();
        let mut cost = vec![0.0; ncols];
        cost[..objective.len()].copy_from_slice(objective);
        for i in 0..self.m {
            let b = self.basis[i];
            let cb = cost[b];
            if cb != 0.0 {
                for j in 0..ncols {
                    cost[j] -= cb * self.rows[i][j];
                }
                // cost rhs is not tracked; primal values suffice.
            }
        }
        if self.pivot_loop(&mut cost) {
            Status::Optimal
        } else {
            Status::Unbounded
        }
    }

    /// Pivot basic artificials out (or drop redundant rows), then remove the
    /// artificial columns.
    fn expel_artificials(&mut self) {
        let art_start = self.nv + self.m;
        let mut drop_rows = Vec::new();
        for i in 0..self.m {
            if self.basis[i] >= art_start {
                let mut pivoted = false;
                for j in 0..art_start {
                    if self.rows[i][j].abs() > PIVOT_EPS {
                        self.pivot(i, j);
                        pivoted = true;
                        break;
                    }
                }
                if !pivoted {
                    drop_rows.push(i);
                }
            }
        }
        for &i in drop_rows.iter().rev() {
            self.rows.remove(i);
            self.rhs.remove(i);
            self.basis.remove(i);
            self.m -= 1;
        }
        for row in self.rows.iter_mut() {
            row.truncate(art_start);
        }
        self.n_art = 0;
    }

    /// Bland's rule pivoting until optimal. Returns false when unbounded.
    fn pivot_loop(&mut self, cost: &mut [f64]) -> bool {
        for _ in 0..50_000 {
            // Entering: smallest index with positive reduced cost.
            let Some(enter) = (0..cost.len()).find(|&j| cost[j] > COST_EPS) else {
                return true;
            };
            // Leaving: min ratio, ties broken by smallest basis variable.
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for i in 0..self.m {
                let a = self.rows[i][enter];
                if a > PIVOT_EPS {
                    let ratio = self.rhs[i] / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            ratio < best - PIVOT_EPS
                                || (ratio < best + PIVOT_EPS && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        best = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(leave) = leave else {
                return false;
            };
            self.pivot_with_cost(leave, enter, cost);
        }
        panic!("simplex failed to terminate");
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        self.rhs[row] /= p;
        for i in 0..self.m {
            if i != row {
                let f = self.rows[i][col];
                if f != 0.0 {
                    for j in 0..self.rows[i].len() {
                        self.rows[i][j] -= f * self.rows[row][j];
                    }
                    self.rhs[i] -= f * self.rhs[row];
                }
            }
        }
        self.basis[row] = col;
    }

    fn pivot_with_cost(&mut self, row: usize, col: usize, cost: &mut [f64]) {
        self.pivot(row, col);
        let f = cost[col];
        if f != 0.0 {
            for j in 0..cost.len() {
                cost[j] -= f * self.rows[row][j];
            }
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.nv];
        for i in 0..self.m {
            if self.basis[i] < self.nv {
                x[self.basis[i]] = self.rhs[i];
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_box_maximum() {
        // max x + y st x <= 2, y <= 3, x,y >= 0 -> 5 at (2,3)
        let r = maximize(
            &[1.0, 1.0],
            &[
                Constraint::new(vec![1.0, 0.0], 2.0),
                Constraint::new(vec![0.0, 1.0], 3.0),
            ],
            0,
        );
        match r {
            LpResult::Optimal { x, objective } => {
                assert!((objective - 5.0).abs() < 1e-9);
                assert!((x[0] - 2.0).abs() < 1e-9);
                assert!((x[1] - 3.0).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn free_variables_go_negative() {
        // max -x st x >= -4 (i.e. -x <= 4), x free -> objective 4 at x = -4
        let r = maximize(&[-1.0], &[Constraint::new(vec![-1.0], 4.0)], 1);
        match r {
            LpResult::Optimal { x, objective } => {
                assert!((objective - 4.0).abs() < 1e-9);
                assert!((x[0] + 4.0).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        // x <= -1 with x >= 0 is infeasible.
        let r = maximize(&[1.0], &[Constraint::new(vec![1.0], -1.0)], 0);
        assert_eq!(r, LpResult::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let r = maximize(&[1.0], &[Constraint::new(vec![-1.0], 0.0)], 0);
        assert_eq!(r, LpResult::Unbounded);
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // max -x - y st x + y >= 1 (-(x+y) <= -1), x,y >= 0 -> -1 on the segment
        let r = maximize(
            &[-1.0, -1.0],
            &[Constraint::new(vec![-1.0, -1.0], -1.0)],
            0,
        );
        match r {
            LpResult::Optimal { objective, .. } => assert!((objective + 1.0).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }
}
