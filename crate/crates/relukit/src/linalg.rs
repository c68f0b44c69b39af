//! Small dense linear-algebra helpers shared by the geometry and solver code.
//!
//! Problem sizes here are tiny ((n+1) x m with n <= 3, m <= ~30), so
//! everything routes through nalgebra's dense SVD.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff for numerical rank decisions.
pub const RANK_CUTOFF: f64 = 1e-9;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn columns_to_matrix(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i])
}

/// Numerical rank of the matrix whose columns are `columns`.
pub fn column_rank(columns: &[Vec<f64>]) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let m = columns_to_matrix(columns);
    m.rank(RANK_CUTOFF * matrix_scale(&m))
}

fn matrix_scale(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0)
}

/// Minimum-norm least-squares solution of `sum_j lambda_j * columns[j] = rhs`.
///
/// Returns the coefficient vector and the numerical rank of the column matrix.
pub fn min_norm_solve(columns: &[Vec<f64>], rhs: &[f64]) -> (Vec<f64>, usize) {
    if columns.is_empty() {
        return (Vec::new(), 0);
    }
    let a = columns_to_matrix(columns);
    let eps = RANK_CUTOFF * matrix_scale(&a);
    let rank = a.clone().rank(eps);
    let b = DVector::from_column_slice(rhs);
    let svd = a.svd(true, true);
    let x = svd.solve(&b, eps).expect("svd solve");
    (x.iter().copied().collect(), rank)
}

/// Residual of a proposed coefficient vector: `max_i |sum_j lambda_j c_ji - rhs_i|`.
pub fn solve_residual(columns: &[Vec<f64>], lambda: &[f64], rhs: &[f64]) -> f64 {
    let mut acc = vec![0.0; rhs.len()];
    for (col, l) in columns.iter().zip(lambda) {
        axpy(&mut acc, *l, col);
    }
    acc.iter()
        .zip(rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Gram-Schmidt with a re-orthogonalization pass; near-dependent inputs are
/// dropped. Returns an orthonormal basis of the span.
pub fn orthonormalize(vecs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vecs {
        let scale_ref = norm(v).max(1.0);
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&r, q);
                axpy(&mut r, -c, q);
            }
        }
        let n = norm(&r);
        if n > 1e-12 * scale_ref {
            basis.push(scale(&r, 1.0 / n));
        }
    }
    basis
}

/// Orthonormal basis of the orthogonal complement of `span(vecs)` in R^dim.
pub fn nullspace_basis(vecs: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let row_basis = orthonormalize(vecs);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in 0..dim {
        if row_basis.len() + out.len() == dim {
            break;
        }
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        for _ in 0..2 {
            for q in row_basis.iter().chain(out.iter()) {
                let c = dot(&e, q);
                axpy(&mut e, -c, q);
            }
        }
        let n = norm(&e);
        if n > 1e-10 {
            out.push(scale(&e, 1.0 / n));
        }
    }
    out
}

/// First unit vector orthogonal to all of `vecs`, if the span is not full.
pub fn perp_vector(vecs: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    nullspace_basis(vecs, dim).into_iter().next()
}

/// Minimum-norm particular solution of the consistent system `rows * x = rhs`.
/// Returns `None` when the equations are inconsistent.
pub fn affine_solution(rows: &[Vec<f64>], rhs: &[f64], dim: usize) -> Option<Vec<f64>> {
    if rows.is_empty() {
        return Some(vec![0.0; dim]);
    }
    let a = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
    let eps = RANK_CUTOFF * matrix_scale(&a);
    let b = DVector::from_column_slice(rhs);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, eps).expect("svd solve");
    let residual = (&a * &x - &b).amax();
    let scale_ref = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if residual <= 1e-8 * scale_ref {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_norm_picks_shortest_solution() {
        // x + y = 2 has min-norm solution (1, 1).
        let (sol, rank) = min_norm_solve(&[vec![1.0], vec![1.0]], &[2.0]);
        assert_eq!(rank, 1);
        assert!((sol[0] - 1.0).abs() < 1e-12);
        assert!((sol[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_detects_parallel_columns() {
        let cols = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert_eq!(column_rank(&cols), 1);
    }

    #[test]
    fn nullspace_of_plane_normal() {
        let ns = nullspace_basis(&[vec![0.0, 0.0, 1.0]], 3);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!(v[2].abs() < 1e-12);
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_solution_detects_inconsistency() {
        // x = 0 and x = 1 cannot both hold.
        let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert!(affine_solution(&rows, &[0.0, 1.0], 2).is_none());
        assert!(affine_solution(&rows, &[0.5, 0.5], 2).is_some());
    }
}
