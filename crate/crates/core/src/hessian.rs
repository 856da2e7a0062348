//! Server-side learning of the per-worker Hessian approximations `B^i`.

use serde::{Deserialize, Serialize};

use crate::compress::{decompress, CompressedBlock};
use crate::error::{FlecsError, Result};
use crate::numerics::{ensure_finite, pinv_sym, sym_eig, symmetrize, truncated_inner_inverse, PINV_RTOL};
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum HessianRule {
    /// Truncated limited-memory SR1.
    Lsr1,
    /// `B+ = (1 - beta) B + beta * Y M^+ Y^T`.
    Direct { beta: f64 },
}

impl HessianRule {
    pub fn validate(&self) -> Result<()> {
        if let HessianRule::Direct { beta } = *self {
            check_beta(beta)?;
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(FlecsError::config("hessian.beta", format!("must lie in (0, 1], got {beta}")))
    }
}

/// Dense approximation of one worker's Hessian, held by the server.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerHessianState {
    pub worker_id: usize,
    pub b: Matrix,
}

/// Server-side estimate of `Y = Hess f_i(w) S` plus the exact `S^T Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructedSketch {
    pub y_tilde: Matrix,
    pub m: Matrix,
}

/// `Y~ = decompress(C) + B S`; `M` is symmetrized on receipt.
pub fn reconstruct(block: &CompressedBlock, b: &Matrix, s: &Matrix, m: &Matrix) -> Result<ReconstructedSketch> {
    let d = b.nrows();
    let k = s.ncols();
    if b.ncols() != d || s.nrows() != d || (block.rows, block.cols) != (d, k) || m.shape() != (k, k) {
        return Err(FlecsError::Dimension(format!(
            "reconstruct: B {:?}, S {:?}, C {}x{}, M {:?}",
            b.shape(),
            s.shape(),
            block.rows,
            block.cols,
            m.shape()
        )));
    }
    Ok(ReconstructedSketch {
        y_tilde: decompress(block)? + b * s,
        m: symmetrize(m),
    })
}

/// Truncated L-SR1:
/// `B+ = B + R U [L^-1]_omega U^T R^T` with `R = Y~ - B S` and
/// `U L U^T = M - S^T B S`.
pub fn update_lsr1_truncated(b: &Matrix, y_tilde: &Matrix, m: &Matrix, s: &Matrix, omega: f64) -> Result<Matrix> {
    ensure_finite(y_tilde, "reconstructed sketch")?;
    ensure_finite(m, "sketched curvature")?;
    let bs = b * s;
    let residual = y_tilde - &bs;
    if residual.iter().all(|&x| x == 0.0) {
        return Ok(b.clone());
    }
    let inner = m - s.transpose() * &bs;
    let eig = sym_eig(&inner)?;
    let inv = truncated_inner_inverse(eig.eigenvalues.as_slice(), omega);
    let ru = residual * &eig.eigenvectors;
    let scaled = Matrix::from_fn(ru.nrows(), ru.ncols(), |r, c| ru[(r, c)] * inv[c]);
    Ok(symmetrize(&(b + scaled * ru.transpose())))
}

/// Direct update `B+ = (1 - beta) B + beta Y~ M^+ Y~^T`.
pub fn update_direct(b: &Matrix, y_tilde: &Matrix, m: &Matrix, beta: f64) -> Result<Matrix> {
    check_beta(beta)?;
    ensure_finite(y_tilde, "reconstructed sketch")?;
    ensure_finite(m, "sketched curvature")?;
    let m_pinv = pinv_sym(m, PINV_RTOL)?;
    let fresh = y_tilde * m_pinv * y_tilde.transpose();
    Ok(symmetrize(&(b * (1.0 - beta) + fresh * beta)))
}

/// `B + (1/n) sum_i ||C_i||_F I`.
pub fn update_regularized_identity(b_agg: &Matrix, c_norms: &[f64]) -> Matrix {
    let mut out = b_agg.clone();
    if c_norms.is_empty() {
        return out;
    }
    let shift = c_norms.iter().sum::<f64>() / c_norms.len() as f64;
    for i in 0..out.nrows() {
        out[(i, i)] += shift;
    }
    out
}

/// What happened to one worker's approximation during an update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// The update failed numerically and the previous `B` was kept.
    Skipped,
}

impl WorkerHessianState {
    pub fn new(worker_id: usize, b: Matrix) -> Self {
        Self { worker_id, b }
    }

    pub fn zeros(worker_id: usize, d: usize) -> Self {
        Self::new(worker_id, Matrix::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// Applies `rule`. Non-finite inputs are errors; a failed decomposition
    /// keeps the previous approximation.
    pub fn apply(&mut self, rule: &HessianRule, recon: &ReconstructedSketch, s: &Matrix, omega: f64) -> Result<UpdateOutcome> {
        ensure_finite(&recon.y_tilde, "reconstructed sketch")?;
        ensure_finite(&recon.m, "sketched curvature")?;
        let next = match *rule {
            HessianRule::Lsr1 => update_lsr1_truncated(&self.b, &recon.y_tilde, &recon.m, s, omega),
            HessianRule::Direct { beta } => update_direct(&self.b, &recon.y_tilde, &recon.m, beta),
        };
        match next {
            Ok(b) if b.iter().all(|x| x.is_finite()) => {
                debug_assert!((&b - b.transpose()).norm() <= 1e-10 * b.norm().max(f64::MIN_POSITIVE));
                self.b = b;
                Ok(UpdateOutcome::Applied)
            }
            Ok(_) => {
                log::warn!("worker {}: Hessian update produced non-finite entries; keeping previous", self.worker_id);
                Ok(UpdateOutcome::Skipped)
            }
            Err(e @ FlecsError::Config { .. }) => Err(e),
            Err(e) => {
                log::warn!("worker {}: Hessian update failed ({e}); keeping previous", self.worker_id);
                Ok(UpdateOutcome::Skipped)
            }
        }
    }
}
