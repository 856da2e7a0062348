//! Search directions `p = -A grad`.
//!
//! Both truncated rules build `A` from a spectrally clamped approximation,
//! so `A` is positive definite with known bounds:
//!
//! - truncated inverse: `1/Omega <= eig(A) <= 1/omega`;
//! - FedSONIA: `1/Omega <= eig(A) <= 2/omega`.

use serde::{Deserialize, Serialize};

use crate::error::{FlecsError, Result};
use crate::numerics::{pinv_sym, sym_eig, thin_qr, truncate_spectrum, TruncatedSpectrum, PINV_RTOL};
use crate::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DirectionRule {
    TruncatedInverse,
    /// Curvature inside the sketched subspace, scaled gradient outside it.
    FedSonia { rho: f64 },
    /// Shifted Newton solve `(B + lambda I) p = -grad`, with `lambda` the
    /// mean Frobenius norm of the compressed residuals.
    Regularized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionResult {
    pub p: Vector,
    /// Guaranteed spectral interval `(mu1, mu2)` of the applied operator, when
    /// the rule provides one.
    pub bounds: Option<(f64, f64)>,
    /// Eigenvalues lifted to `omega`.
    pub floored: usize,
    /// Eigenvalues cut to `Omega`.
    pub capped: usize,
    /// `rho` actually used by FedSONIA after clamping.
    pub rho: Option<f64>,
    /// Diagonal shift used by the regularized solve.
    pub shift: Option<f64>,
    /// The rule failed and `-grad` was used instead.
    pub fallback: bool,
}

impl DirectionResult {
    fn plain(p: Vector) -> Self {
        Self {
            p,
            bounds: None,
            floored: 0,
            capped: 0,
            rho: None,
            shift: None,
            fallback: false,
        }
    }

    /// Steepest-descent fallback.
    pub fn gradient_step(grad: &Vector) -> Self {
        Self {
            fallback: true,
            ..Self::plain(-grad)
        }
    }
}

fn check_grad(grad: &Vector, d: usize) -> Result<()> {
    if grad.len() != d {
        return Err(FlecsError::Dimension(format!("gradient length {} vs dimension {d}", grad.len())));
    }
    if !grad.iter().all(|x| x.is_finite()) {
        return Err(FlecsError::NonFinite("gradient"));
    }
    Ok(())
}

/// `V diag(inv) V^T` as a dense matrix.
fn spectral_operator(v: &Matrix, inv: &[f64]) -> Matrix {
    let scaled = Matrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * inv[c]);
    scaled * v.transpose()
}

/// The dense operator `(|B|_omega^Omega)^{-1}`.
pub fn truncated_inverse_operator(b: &Matrix, omega: f64, big_omega: f64) -> Result<Matrix> {
    let eig = sym_eig(b)?;
    let t = truncate_spectrum(eig.eigenvalues.as_slice(), omega, big_omega)?;
    Ok(spectral_operator(&eig.eigenvectors, &t.inverse))
}

/// `p = -V (|Lambda|_omega^Omega)^{-1} V^T grad` for `B = V Lambda V^T`.
pub fn direction_truncated_inverse(b: &Matrix, grad: &Vector, omega: f64, big_omega: f64) -> Result<DirectionResult> {
    check_grad(grad, b.nrows())?;
    let eig = sym_eig(b)?;
    let t = truncate_spectrum(eig.eigenvalues.as_slice(), omega, big_omega)?;
    let mut coef = eig.eigenvectors.transpose() * grad;
    for (c, inv) in coef.iter_mut().zip(&t.inverse) {
        *c *= inv;
    }
    Ok(DirectionResult {
        bounds: Some((1.0 / big_omega, 1.0 / omega)),
        floored: t.floored,
        capped: t.capped,
        ..DirectionResult::plain(-(&eig.eigenvectors * coef))
    })
}

/// Orthonormal basis `V~ = Q V` of the sketched subspace together with the
/// truncated spectrum of `R M^+ R^T = V Lambda V^T`.
#[derive(Clone, Debug)]
pub struct SoniaSubspace {
    pub basis: Matrix,
    pub spectrum: TruncatedSpectrum,
    big_omega: f64,
    omega: f64,
}

impl SoniaSubspace {
    pub fn new(y_tilde: &Matrix, m: &Matrix, omega: f64, big_omega: f64) -> Result<Self> {
        let k = y_tilde.ncols();
        if k == 0 {
            return Err(FlecsError::config("sketch.m", "FedSONIA needs at least one sketch column"));
        }
        if m.shape() != (k, k) {
            return Err(FlecsError::Dimension(format!("M is {:?}, expected {k}x{k}", m.shape())));
        }
        let (q, r) = thin_qr(y_tilde)?;
        let m_pinv = pinv_sym(m, PINV_RTOL)?;
        let eig = sym_eig(&(&r * m_pinv * r.transpose()))?;
        let spectrum = truncate_spectrum(eig.eigenvalues.as_slice(), omega, big_omega)?;
        Ok(Self {
            basis: q * eig.eigenvectors,
            spectrum,
            big_omega,
            omega,
        })
    }

    /// Admissible interval for `rho`: `[1/Omega, 1/max_i inv_i]`, further
    /// capped at `1/omega` so the operator stays within `2/omega`.
    pub fn rho_bracket(&self) -> (f64, f64) {
        let lower = 1.0 / self.big_omega;
        let max_inv = self.spectrum.inverse.iter().copied().fold(0.0, f64::max);
        let upper = (1.0 / max_inv).min(1.0 / self.omega);
        (lower, upper.max(lower))
    }

    pub fn clamp_rho(&self, rho: f64) -> f64 {
        let (lo, hi) = self.rho_bracket();
        let clamped = rho.clamp(lo, hi);
        if clamped != rho {
            log::info!("FedSONIA rho {rho} clamped to {clamped} (bracket [{lo}, {hi}])");
        }
        clamped
    }

    /// Splits `grad` into its component inside the subspace and the rest.
    pub fn decompose(&self, grad: &Vector) -> (Vector, Vector) {
        let inside = &self.basis * (self.basis.transpose() * grad);
        let outside = grad - &inside;
        (inside, outside)
    }

    /// Dense `A = V~ (|Lambda|)^{-1} V~^T + rho (I - V~ V~^T)`.
    pub fn operator(&self, rho: f64) -> Matrix {
        let d = self.basis.nrows();
        let proj = &self.basis * self.basis.transpose();
        spectral_operator(&self.basis, &self.spectrum.inverse) + (Matrix::identity(d, d) - proj) * rho
    }
}

/// `p = -V~ (|Lambda|)^{-1} V~^T grad - rho g_perp`.
pub fn direction_fedsonia(y_tilde: &Matrix, m: &Matrix, grad: &Vector, omega: f64, big_omega: f64, rho: f64) -> Result<DirectionResult> {
    check_grad(grad, y_tilde.nrows())?;
    let sub = SoniaSubspace::new(y_tilde, m, omega, big_omega)?;
    let rho = sub.clamp_rho(rho);
    let mut coef = sub.basis.transpose() * grad;
    let inside = &sub.basis * &coef;
    let outside = grad - inside;
    for (c, inv) in coef.iter_mut().zip(&sub.spectrum.inverse) {
        *c *= inv;
    }
    let p = -(&sub.basis * coef) - outside * rho;
    Ok(DirectionResult {
        bounds: Some((1.0 / big_omega, 2.0 / omega)),
        floored: sub.spectrum.floored,
        capped: sub.spectrum.capped,
        rho: Some(rho),
        ..DirectionResult::plain(p)
    })
}

/// Solves `(B + lambda I + eps I) p = -grad`, escalating `eps` through
/// `0, 1e-8, 1e-7, ..., 1e-2` until the solve succeeds with `p^T grad < 0`.
/// Falls back to `-grad` if every shift fails.
pub fn direction_regularized(b: &Matrix, grad: &Vector, lambda: f64) -> Result<DirectionResult> {
    check_grad(grad, b.nrows())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(FlecsError::config("direction.lambda", format!("must be >= 0, got {lambda}")));
    }
    if grad.iter().all(|&x| x == 0.0) {
        return Ok(DirectionResult::plain(Vector::zeros(grad.len())));
    }
    let d = b.nrows();
    let shifts = std::iter::once(0.0).chain((-8..=-2).map(|e| 10f64.powi(e)));
    for eps in shifts {
        let mut a = b.clone();
        for i in 0..d {
            a[(i, i)] += lambda + eps;
        }
        if let Some(p) = a.lu().solve(&(-grad)) {
            if p.iter().all(|x| x.is_finite()) && p.dot(grad) < 0.0 {
                return Ok(DirectionResult {
                    shift: Some(eps),
                    ..DirectionResult::plain(p)
                });
            }
        }
    }
    log::warn!("regularized solve failed for every shift; using -grad");
    Ok(DirectionResult::gradient_step(grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::symmetrize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
    }

    fn random_vec(d: usize, seed: u64) -> Vector {
        random(d, 1, seed).column(0).clone_owned()
    }

    #[test]
    fn identity_gives_negative_gradient() {
        let g = random_vec(5, 1);
        let r = direction_truncated_inverse(&Matrix::identity(5, 5), &g, 1e-3, 1e8).unwrap();
        assert!((r.p + &g).amax() < 1e-15);
        assert_eq!(r.bounds, Some((1e-8, 1e3)));
    }

    #[test]
    fn zero_matrix_floors_to_omega() {
        let g = random_vec(4, 2);
        let r = direction_truncated_inverse(&Matrix::zeros(4, 4), &g, 0.5, 10.0).unwrap();
        assert!((r.p + &g / 0.5).amax() < 1e-14);
        assert_eq!(r.floored, 4);
    }

    #[test]
    fn truncated_inverse_matches_dense_spectral_formula() {
        for seed in 0..5 {
            let b = symmetrize(&(random(10, 10, seed) * 3.0));
            let g = random_vec(10, seed + 50);
            let (omega, big) = (0.05, 2.0);
            let r = direction_truncated_inverse(&b, &g, omega, big).unwrap();
            // Oracle: nalgebra's own eigendecomposition, clamped by hand.
            let eig = nalgebra::SymmetricEigen::new(b.clone());
            let diag = eig.eigenvalues.map(|l| 1.0 / l.abs().max(omega).min(big));
            let a = &eig.eigenvectors * Matrix::from_diagonal(&diag) * eig.eigenvectors.transpose();
            assert!((r.p + a * &g).amax() < 1e-12);
        }
    }

    #[test]
    fn fedsonia_gradient_outside_subspace() {
        // Y spans the first two coordinates; grad lives in the third.
        let y = Matrix::from_column_slice(3, 2, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]));
        let g = Vector::from_vec(vec![0.0, 0.0, 4.0]);
        let r = direction_fedsonia(&y, &m, &g, 1e-3, 1e8, 1e-8).unwrap();
        assert!((r.p + &g * r.rho.unwrap()).amax() < 1e-15);
    }

    #[test]
    fn fedsonia_full_memory_is_truncated_newton() {
        let q = crate::dataset::synthetic_quadratic(5, 0.5, 3.0, 1, 2).unwrap();
        let h = &q.hessians[0];
        let s = Matrix::identity(5, 5);
        let y = h * &s;
        let m = s.transpose() * &y;
        let g = random_vec(5, 3);
        let r = direction_fedsonia(&y, &m, &g, 1e-3, 1e8, 1e-8).unwrap();
        let newton = direction_truncated_inverse(h, &g, 1e-3, 1e8).unwrap();
        assert!((r.p - newton.p).amax() < 1e-10);
    }

    #[test]
    fn fedsonia_matches_explicit_projectors() {
        let (d, k) = (6, 2);
        let h = {
            let g = random(d, d, 31);
            &g * g.transpose() + Matrix::identity(d, d) * 0.1
        };
        let s = random(d, k, 32);
        let y = &h * &s;
        let m = s.transpose() * &y;
        let g = random_vec(d, 33);
        let (omega, big, rho) = (1e-3, 1e8, 1e-8);
        let r = direction_fedsonia(&y, &m, &g, omega, big, rho).unwrap();

        // Oracle: B = Y M^-1 Y^T assembled densely, its range projector from
        // Y (Y^T Y)^-1 Y^T, and the truncated pseudo-inverse restricted to it.
        let b = &y * m.clone().try_inverse().unwrap() * y.transpose();
        let proj = &y * (y.transpose() * &y).try_inverse().unwrap() * y.transpose();
        let eig = nalgebra::SymmetricEigen::new(symmetrize(&b));
        let mut a = Matrix::zeros(d, d);
        for i in 0..d {
            let v = eig.eigenvectors.column(i);
            // Eigenvectors in the range of Y carry the nonzero eigenvalues.
            if (&proj * v - v).norm() < 1e-8 {
                let l = eig.eigenvalues[i].abs().max(omega).min(big);
                a += v * v.transpose() / l;
            }
        }
        a += (Matrix::identity(d, d) - &proj) * rho;
        assert!((r.p + a * &g).amax() < 1e-9);
    }

    #[test]
    fn fedsonia_decomposition_identity() {
        let y = random(8, 3, 4);
        let m = symmetrize(&random(3, 3, 5));
        let g = random_vec(8, 6);
        let sub = SoniaSubspace::new(&y, &m, 1e-3, 1e8).unwrap();
        let (inside, outside) = sub.decompose(&g);
        assert!((&inside + &outside - &g).amax() < 1e-14);
        assert!((sub.basis.transpose() * outside).amax() < 1e-10);
    }

    #[test]
    fn fedsonia_rho_clamped_into_bracket() {
        let y = random(6, 2, 7);
        let m = symmetrize(&random(2, 2, 8));
        let sub = SoniaSubspace::new(&y, &m, 1e-3, 1e8).unwrap();
        let (lo, hi) = sub.rho_bracket();
        assert!(lo <= hi);
        assert_eq!(sub.clamp_rho(0.0), lo);
        assert_eq!(sub.clamp_rho(1e12), hi);
        assert!(hi <= 1e3);
    }

    #[test]
    fn fedsonia_needs_columns() {
        let r = direction_fedsonia(&Matrix::zeros(3, 0), &Matrix::zeros(0, 0), &Vector::zeros(3), 1e-3, 1e8, 1e-8);
        assert!(matches!(r, Err(FlecsError::Config { .. })));
    }

    #[test]
    fn regularized_identity_and_shift() {
        let g = random_vec(4, 9);
        let r = direction_regularized(&Matrix::identity(4, 4), &g, 0.0).unwrap();
        assert!((r.p + &g).amax() < 1e-15);
        let r = direction_regularized(&Matrix::zeros(4, 4), &g, 2.0).unwrap();
        assert!((r.p + &g / 2.0).amax() < 1e-15);
        assert_eq!(r.shift, Some(0.0));
    }

    #[test]
    fn regularized_solve_residual() {
        let a = random(8, 8, 10);
        let b = &a * a.transpose() + Matrix::identity(8, 8) * 0.01;
        let g = random_vec(8, 11);
        let r = direction_regularized(&b, &g, 0.3).unwrap();
        let residual = (&b + Matrix::identity(8, 8) * 0.3) * &r.p + &g;
        assert!(residual.norm() <= 1e-8);
    }

    #[test]
    fn regularized_escalates_or_falls_back() {
        // Strongly indefinite: no small shift can make -grad a descent solve.
        let b = Matrix::from_diagonal(&Vector::from_vec(vec![-5.0, -5.0]));
        let g = Vector::from_vec(vec![1.0, 1.0]);
        let r = direction_regularized(&b, &g, 0.0).unwrap();
        assert!(r.fallback);
        assert_eq!(r.p, -g);
    }

    #[test]
    fn zero_gradient_zero_step() {
        let z = Vector::zeros(3);
        assert_eq!(direction_truncated_inverse(&Matrix::identity(3, 3), &z, 1e-3, 1e8).unwrap().p, z);
        assert_eq!(direction_regularized(&Matrix::identity(3, 3), &z, 0.0).unwrap().p, z);
        assert_eq!(direction_fedsonia(&random(3, 1, 1), &Matrix::identity(1, 1), &z, 1e-3, 1e8, 1e-8).unwrap().p, z);
    }

    #[test]
    fn descent_inequality_holds() {
        for seed in 0..20 {
            let b = symmetrize(&(random(7, 7, seed) * 10.0));
            let g = random_vec(7, seed + 1000);
            let (omega, big) = (1e-2, 50.0);
            let r = direction_truncated_inverse(&b, &g, omega, big).unwrap();
            assert!(g.dot(&r.p) <= -(1.0 / big) * g.norm_squared() * (1.0 - 1e-12));
            let y = random(7, 3, seed + 2000);
            let m = symmetrize(&random(3, 3, seed + 3000));
            let r = direction_fedsonia(&y, &m, &g, omega, big, 1.0 / big).unwrap();
            assert!(g.dot(&r.p) <= -(1.0 / big) * g.norm_squared() * (1.0 - 1e-12));
        }
    }
}
