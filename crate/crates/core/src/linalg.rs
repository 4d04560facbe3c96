//! Small dense linear-algebra helpers shared by the filter and the tuning loop.

use nalgebra::{DMatrix, DVector};

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Inverse of a symmetric matrix: Cholesky first, LU as a fallback for
/// indefinite but non-singular input. `None` when singular.
pub fn sym_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(symmetrized(ch.inverse()));
    }
    let inv = m.clone().try_inverse()?;
    if inv.iter().all(|v| v.is_finite()) {
        Some(symmetrized(inv))
    } else {
        None
    }
}

/// Solve `M X = B` for symmetric `M`: Cholesky when `M` is numerically
/// positive definite, LU otherwise. `None` when `M` is singular.
pub fn sym_solve(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let x = match m.clone().cholesky() {
        Some(ch) => ch.solve(b),
        None => m.clone().lu().solve(b)?,
    };
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `vᵀ M⁻¹ v` for symmetric `M`; `None` when `M` is singular.
pub fn quad_form_inv(m: &DMatrix<f64>, v: &DVector<f64>) -> Option<f64> {
    if let Some(ch) = m.clone().cholesky() {
        let x = ch.solve(v);
        return Some(v.dot(&x));
    }
    let lu = m.clone().lu();
    let x = lu.solve(v)?;
    let q = v.dot(&x);
    q.is_finite().then_some(q)
}

/// Natural log of the determinant of a symmetric positive-definite matrix.
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let ch = m.clone().cholesky()?;
    let l = ch.l_dirty();
    Some((0..m.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = symmetrized(m.clone());
    s.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Keep only the diagonal of `m`.
pub fn diagonal_only(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&m.diagonal())
}

/// Outer product `a bᵀ`.
pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

/// `vᵀ M⁻¹ v` when `M` is symmetric positive definite, `None` otherwise.
pub fn spd_quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> Option<f64> {
    let ch = m.clone().cholesky()?;
    let q = v.dot(&ch.solve(v));
    q.is_finite().then_some(q)
}

/// Nearest symmetric matrix with every eigenvalue (or, with
/// `diagonal_only`, every diagonal entry) at least `floor`. Returns the
/// projected matrix and how many entries were raised.
pub fn project_psd(m: &DMatrix<f64>, floor: f64, diagonal_only: bool) -> (DMatrix<f64>, usize) {
    if diagonal_only {
        let mut raised = 0;
        let d = m.diagonal().map(|v| {
            if v < floor || !v.is_finite() {
                raised += 1;
                floor
            } else {
                v
            }
        });
        return (DMatrix::from_diagonal(&d), raised);
    }
    let eig = symmetrized(m.clone()).symmetric_eigen();
    let mut raised = 0;
    let vals = eig.eigenvalues.map(|v| {
        if v < floor {
            raised += 1;
            floor
        } else {
            v
        }
    });
    if raised == 0 {
        return (symmetrized(m.clone()), 0);
    }
    let v = &eig.eigenvectors;
    (symmetrized(v * DMatrix::from_diagonal(&vals) * v.transpose()), raised)
}
