//! Dense kernels shared by the Hessian-learning and direction rules.
//!
//! Decompositions are delegated to `nalgebra`; this module fixes the
//! contracts around them (symmetrization on input, ascending eigenvalue
//! order, pseudo-inverse tolerance, and the two eigenvalue truncation rules).

use nalgebra::SymmetricEigen;

use crate::error::{FlecsError, Result};
use crate::{Matrix, Vector};

/// Relative cut-off used by [`pinv_sym`] unless a caller overrides it.
pub const PINV_RTOL: f64 = 1e-10;

/// `A = V diag(eigenvalues) V^T` with eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vector,
    pub eigenvectors: Matrix,
}

impl SpectralDecomposition {
    /// `V diag(f(lambda)) V^T`.
    pub fn reassemble_with(&self, diag: &[f64]) -> Matrix {
        let v = &self.eigenvectors;
        let scaled = Matrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * diag[c]);
        let out = scaled * v.transpose();
        symmetrize(&out)
    }

    pub fn reassemble(&self) -> Matrix {
        self.reassemble_with(self.eigenvalues.as_slice())
    }
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

pub(crate) fn ensure_finite(a: &Matrix, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FlecsError::NonFinite(what))
    }
}

/// Symmetric eigendecomposition of `(A + A^T) / 2`.
pub fn sym_eig(a: &Matrix) -> Result<SpectralDecomposition> {
    if !a.is_square() {
        return Err(FlecsError::Dimension(format!(
            "eigendecomposition of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "eigendecomposition input")?;
    let p = a.nrows();
    if p == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vector::zeros(0),
            eigenvectors: Matrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = Vector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = Matrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
    if !eigenvalues.iter().all(|x| x.is_finite()) {
        return Err(FlecsError::NonFinite("eigenvalues"));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Economy Householder QR of a `d x m` matrix with `d >= m`.
///
/// `Q` always has orthonormal columns; for rank-deficient input `R` carries
/// zeros on its diagonal.
pub fn thin_qr(y: &Matrix) -> Result<(Matrix, Matrix)> {
    if y.nrows() < y.ncols() {
        return Err(FlecsError::Dimension(format!(
            "thin QR needs rows >= cols, got {}x{}",
            y.nrows(),
            y.ncols()
        )));
    }
    ensure_finite(y, "QR input")?;
    let qr = y.clone().qr();
    Ok((qr.q(), qr.r()))
}

/// Pseudo-inverse of a symmetric matrix via its eigendecomposition.
/// Eigenvalues with `|lambda| <= rtol * max|lambda|` are treated as zero.
pub fn pinv_sym(m: &Matrix, rtol: f64) -> Result<Matrix> {
    let eig = sym_eig(m)?;
    let scale = eig.eigenvalues.amax();
    if scale == 0.0 {
        return Ok(Matrix::zeros(m.nrows(), m.ncols()));
    }
    let cut = rtol * scale;
    let inv: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if l.abs() <= cut { 0.0 } else { 1.0 / l })
        .collect();
    Ok(eig.reassemble_with(&inv))
}

/// Clamped absolute spectrum `min(max(|lambda|, omega), big_omega)` and its
/// entrywise reciprocal.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSpectrum {
    pub clamped: Vec<f64>,
    pub inverse: Vec<f64>,
    /// Eigenvalues lifted up to `omega`.
    pub floored: usize,
    /// Eigenvalues cut down to `big_omega`.
    pub capped: usize,
}

pub fn check_truncation(omega: f64, big_omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(FlecsError::config("direction.omega", format!("must be positive, got {omega}")));
    }
    if !(big_omega >= omega && big_omega.is_finite()) {
        return Err(FlecsError::config(
            "direction.big_omega",
            format!("must be >= omega ({omega}), got {big_omega}"),
        ));
    }
    Ok(())
}

pub fn truncate_spectrum(eigenvalues: &[f64], omega: f64, big_omega: f64) -> Result<TruncatedSpectrum> {
    check_truncation(omega, big_omega)?;
    let mut floored = 0;
    let mut capped = 0;
    let clamped: Vec<f64> = eigenvalues
        .iter()
        .map(|&l| {
            let a = l.abs();
            if a < omega {
                floored += 1;
            } else if a > big_omega {
                capped += 1;
            }
            a.max(omega).min(big_omega)
        })
        .collect();
    let inverse = clamped.iter().map(|c| 1.0 / c).collect();
    Ok(TruncatedSpectrum {
        clamped,
        inverse,
        floored,
        capped,
    })
}

/// Inverse of the inner SR1 eigenvalues with small inverses dropped:
/// `0` when `l == 0` or `|1/l| <= omega`, otherwise `1/l`.
pub fn truncated_inner_inverse(eigenvalues: &[f64], omega: f64) -> Vec<f64> {
    eigenvalues
        .iter()
        .map(|&l| {
            if l == 0.0 {
                return 0.0;
            }
            let inv = 1.0 / l;
            if inv.abs() <= omega {
                0.0
            } else {
                inv
            }
        })
        .collect()
}
