//! Small dense linear algebra helpers for the Newton solvers.

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` for a square row-major matrix. Returns `None` when the
/// matrix is numerically singular.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return None;
    }
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let rhs = DVector::from_column_slice(b);
    let x = m.lu().solve(&rhs)?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}

/// Least-squares solution of an overdetermined `a x = b` (rows ≥ columns).
pub fn least_squares(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let rows = a.len();
    let cols = a.first()?.len();
    if rows != b.len() || rows < cols || a.iter().any(|r| r.len() != cols) {
        return None;
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| a[i][j]);
    let rhs = DVector::from_column_slice(b);
    let x = m.svd(true, true).solve(&rhs, 1e-14).ok()?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}

/// Unit vector spanning the kernel of an `m × (m+1)` full-rank matrix,
/// oriented to have positive dot product with `hint` when given.
pub fn kernel_direction(jac: &[Vec<f64>], hint: Option<&[f64]>) -> Option<Vec<f64>> {
    let m = jac.len();
    let n = m + 1;
    if jac.iter().any(|row| row.len() != n) {
        return None;
    }
    // Complete the matrix with one extra row and pick the best-conditioned
    // completion among the coordinate directions.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in 0..n {
        let mut a = jac.to_vec();
        let mut row = vec![0.0; n];
        row[c] = 1.0;
        a.push(row);
        let mut rhs = vec![0.0; n];
        rhs[m] = 1.0;
        if let Some(t) = solve(&a, &rhs) {
            let norm = norm2(&t);
            if norm.is_finite() && norm > 0.0 {
                // Smallest norm means the completing row was most aligned with the kernel.
                if best.as_ref().map_or(true, |(bn, _)| norm < *bn) {
                    best = Some((norm, t));
                }
            }
        }
    }
    let (norm, mut t) = best?;
    t.iter_mut().for_each(|v| *v /= norm);
    if let Some(h) = hint {
        if dot(&t, h) < 0.0 {
            t.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Some(t)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
