//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Spectral radius `max |λ|` of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::Numerical(format!(
            "spectral radius of a non-square {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(Error::Numerical(
            "spectral radius of a matrix with non-finite entries".into(),
        ));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = a.clone().complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Factor `L` with `L Lᵀ = M` for a symmetric PSD `M`. Negative round-off
/// eigenvalues are clipped to zero, so singular covariances are fine.
pub fn psd_factor(sym: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sym.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(sym));
    let mut l = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

/// Symmetric PSD square root `M^{1/2}` and, optionally, inverse square root.
pub fn sym_sqrt_and_inv_sqrt(sym: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(sym));
    let q = &eig.eigenvectors;
    let sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()),
    );
    let inv_sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|l| if *l > 0.0 { 1.0 / l.sqrt() } else { 0.0 }),
    );
    let s = q * DMatrix::from_diagonal(&sqrt) * q.transpose();
    let si = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    (s, si)
}

/// Cholesky factorization of a symmetric positive definite matrix that
/// rejects pivots `ℓ_ii² ≤ tol · max_i M_ii` (and non-positive ones).
pub fn cholesky_checked(m: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0_f64, f64::max);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol * scale) || !(d > 0.0) {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ X = B` given the lower Cholesky factor.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_mut(&mut x);
    l.transpose().solve_upper_triangular_mut(&mut x);
    x
}

/// Fixed point of `X ← A X Aᵀ + W` by iteration. Returns `None` if the
/// iteration has not settled (relative change 1e-13) within `max_iter`.
pub fn lyapunov_fixed_point(
    a: &DMatrix<f64>,
    w: &DMatrix<f64>,
    max_iter: usize,
) -> Option<DMatrix<f64>> {
    let mut x = w.clone();
    for _ in 0..max_iter {
        let next = a * &x * a.transpose() + w;
        let delta = (&next - &x).norm();
        x = next;
        if delta <= 1e-13 * x.norm().max(1.0) {
            return Some(symmetrize(&x));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.8]);
        assert!((spectral_radius(&a).unwrap() - 0.9).abs() < 1e-12);
        let eye = DMatrix::<f64>::identity(3, 3);
        assert!((spectral_radius(&eye).unwrap() - 1.0).abs() < 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_rejects_nan() {
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(spectral_radius(&a).is_err());
    }

    #[test]
    fn psd_factor_reconstructs_singular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = psd_factor(&m);
        assert!((&l * l.transpose() - &m).norm() < 1e-12);
    }

    #[test]
    fn checked_cholesky_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_checked(&m, 1e-12).is_none());
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = cholesky_checked(&m, 1e-12).unwrap();
        assert!((&l * l.transpose() - &m).norm() < 1e-12);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let x = cholesky_solve(&l, &b);
        assert!((&m * x - b).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let w = DMatrix::from_element(1, 1, 1.0);
        let x = lyapunov_fixed_point(&a, &w, 10_000).unwrap();
        assert!((x[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
    }
}
