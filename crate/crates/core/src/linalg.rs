//! Small dense-matrix helpers shared by the densities, filters and fusion rules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative asymmetry tolerance for covariance-like matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Diagonal loading applied once when a factorization fails on round-off.
pub const JITTER: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    asym <= SYMMETRY_TOL * scale
}

/// Symmetrizes and factors `m`; failure of the factorization is the definiteness test.
pub fn spd_cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: what,
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { what });
    }
    Cholesky::new(symmetrize(m)).ok_or(Error::NotPositiveDefinite { what })
}

/// Like [`spd_cholesky`], but retries once with `JITTER·I` added.
/// Returns the factor together with the (possibly jittered) symmetric matrix.
pub fn spd_cholesky_jittered(
    m: &DMatrix<f64>,
    what: &'static str,
) -> Result<(Cholesky<f64, Dyn>, DMatrix<f64>)> {
    let sym = symmetrize(m);
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { what });
    }
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok((c, sym));
    }
    let n = sym.nrows();
    let loaded = sym + DMatrix::identity(n, n) * JITTER;
    match Cholesky::new(loaded.clone()) {
        Some(c) => Ok((c, loaded)),
        None => Err(Error::NotPositiveDefinite { what }),
    }
}

pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `vᵀ M⁻¹ v` given the factor of `M`.
pub fn mahalanobis_sq(chol: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let mut y = v.clone();
    // Only the lower triangle of `l_dirty` is read here.
    chol.l_dirty().solve_lower_triangular_mut(&mut y);
    y.norm_squared()
}

pub fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_cholesky(&m, "m").is_err());
        let (_, loaded) = spd_cholesky_jittered(&m, "m").unwrap();
        assert!((loaded[(0, 0)] - 1.0 - JITTER).abs() < 1e-15);
    }

    #[test]
    fn mahalanobis_matches_explicit_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let chol = spd_cholesky(&m, "m").unwrap();
        let explicit = (v.transpose() * m.clone().try_inverse().unwrap() * &v)[(0, 0)];
        assert!((mahalanobis_sq(&chol, &v) - explicit).abs() < 1e-12);
        assert!((log_det(&chol) - m.determinant().ln()).abs() < 1e-12);
    }

    #[test]
    fn block_diagonal_layout() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::from_element(2, 2, 3.0);
        let bd = block_diagonal(&[a, b]);
        assert_eq!(bd.shape(), (3, 3));
        assert_eq!(bd[(0, 0)], 2.0);
        assert_eq!(bd[(0, 1)], 0.0);
        assert_eq!(bd[(2, 1)], 3.0);
    }
}
