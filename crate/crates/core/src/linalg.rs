//! Small dense helpers on top of nalgebra for the `p x p` systems that
//! appear in group-wise least squares.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Pivot threshold relative to the largest diagonal entry below which a
/// cross-product matrix is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Cholesky factor of a symmetric cross-product matrix, or `None` when the
/// matrix is (numerically) rank deficient.
pub(crate) fn factor_spd(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let chol = a.clone().cholesky()?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v * v));
    (min_pivot > RANK_TOL * scale).then_some(chol)
}

/// Solves `a * x = b` for symmetric positive definite `a`.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    factor_spd(a).map(|c| c.solve(b))
}

/// Accumulates `w * v v'` into the symmetric matrix `acc`.
#[inline]
pub(crate) fn add_outer(acc: &mut [f64], v: &[f64], w: f64) {
    let p = v.len();
    for a in 0..p {
        let va = w * v[a];
        let row = &mut acc[a * p..(a + 1) * p];
        for (r, vb) in row.iter_mut().zip(v) {
            *r += va * vb;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `v' A v` for a row-major `p x p` matrix.
#[inline]
pub(crate) fn quad_form(a: &[f64], v: &[f64]) -> f64 {
    let p = v.len();
    let mut s = 0.0;
    for (r, vr) in v.iter().enumerate() {
        s += vr * dot(&a[r * p..(r + 1) * p], v);
    }
    s
}
