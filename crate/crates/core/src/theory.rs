//! Quantities appearing in the convergence guarantees: spectral bounds of
//! the preconditioner, the admissible step size, smoothness estimates, and
//! the Hessian-approximation drift measured against a reference point.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::direction::DirectionRule;
use crate::error::Result;
use crate::objective::GlobalObjective;
use crate::{Matrix, Vector};

/// `(mu1, mu2)` with `mu1 I <= A_k <= mu2 I` for the truncated rules.
pub fn preconditioner_bounds(rule: &DirectionRule, omega: f64, big_omega: f64) -> Option<(f64, f64)> {
    match rule {
        DirectionRule::TruncatedInverse => Some((1.0 / big_omega, 1.0 / omega)),
        DirectionRule::FedSonia { .. } => Some((1.0 / big_omega, 2.0 / omega)),
        DirectionRule::Regularized => None,
    }
}

/// Largest constant step size covered by the global guarantees:
/// `mu1 / (mu2^2 L)`.
pub fn admissible_step(mu1: f64, mu2: f64, lipschitz: f64) -> f64 {
    mu1 / (mu2 * mu2 * lipschitz)
}

/// Per-iteration contraction factor `1 - alpha mu mu1` of `F - F*` under
/// strong convexity.
pub fn contraction_factor(alpha: f64, mu: f64, mu1: f64) -> f64 {
    1.0 - alpha * mu * mu1
}

/// Upper bound on `min_k ||grad F(w_k)||^2` after `t` iterations on a
/// nonconvex objective bounded below by `f_low`.
pub fn nonconvex_gradient_bound(f0: f64, f_low: f64, alpha: f64, mu1: f64, t: usize) -> f64 {
    2.0 * (f0 - f_low) / (alpha * mu1 * t as f64)
}

/// Threshold on the mean Frobenius drift required by the local rate.
pub fn local_drift_threshold(mu: f64, lipschitz: f64) -> f64 {
    2.0 * mu * mu / (lipschitz * lipschitz)
}

/// Radius of the basin around `w*` for the local rate.
pub fn local_basin_radius(mu: f64) -> f64 {
    mu * mu / 2.0
}

/// `(1/n) sum_i ||B_i - H_i||_F`.
pub fn hessian_drift(approximations: &[Matrix], references: &[Matrix]) -> f64 {
    let n = approximations.len().max(1) as f64;
    approximations
        .iter()
        .zip(references)
        .map(|(b, h)| (b - h).norm())
        .sum::<f64>()
        / n
}

/// Largest eigenvalue of `Hess F(w)` by power iteration on Hessian-vector
/// products. The estimate is scaled by `1 + slack` to stay on the safe side
/// of the true value.
pub fn estimate_lipschitz(objective: &GlobalObjective, w: &Vector, iterations: usize, slack: f64, seed: u64) -> Result<f64> {
    let d = objective.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let hv = objective.hvp(w, &v)?;
        lambda = v.dot(&hv);
        let norm = hv.norm();
        if norm == 0.0 {
            break;
        }
        v = hv / norm;
    }
    Ok(lambda * (1.0 + slack))
}
