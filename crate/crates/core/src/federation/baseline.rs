//! Reference methods run under the same accounting as the main loop.
//!
//! * Gradient descent: each worker uploads its gradient and receives `w`.
//! * A lightweight Newton-learning method that compresses the full `d x d`
//!   local Hessian residual each round and solves a shifted Newton system
//!   on the server.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::RunMetrics;
use crate::compress::{compress, decompress, CompressorSpec};
use crate::direction::direction_regularized;
use crate::error::{FlecsError, Result};
use crate::numerics::symmetrize;
use crate::objective::{GlobalObjective, HvpCounter, DEFAULT_DENSE_CAP};
use crate::rng::{self, Stream};
use crate::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub alpha: f64,
    pub max_iterations: u64,
    pub tol: f64,
    pub record_wall_time: bool,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            max_iterations: 500,
            tol: 1e-12,
            record_wall_time: true,
        }
    }
}

fn check_step(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(FlecsError::config("direction.alpha", format!("must be positive, got {alpha}")))
    }
}

fn wall(start: &Instant, record: bool) -> f64 {
    if record {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

/// Distributed gradient descent `w <- w - alpha grad F(w)`.
pub fn run_gd(objective: &GlobalObjective, config: &GdConfig, w0: Vector) -> Result<Vec<RunMetrics>> {
    check_step(config.alpha)?;
    let d = objective.dim();
    let n = objective.num_workers() as u64;
    let per_round = 64 * d as u64 * n;
    let start = Instant::now();
    let mut w = w0;
    let mut rows = Vec::new();
    for k in 0.. {
        let grad = objective.gradient(&w)?;
        let grad_norm_sq = grad.norm_squared();
        rows.push(RunMetrics {
            iter: k,
            loss: objective.value(&w)?,
            grad_norm_sq,
            uplink_bits_cum: per_round * (k + 1),
            downlink_bits_cum: per_round * (k + 1),
            hvp_cum: 0,
            wall_ms: wall(&start, config.record_wall_time),
        });
        if grad_norm_sq <= config.tol || k >= config.max_iterations {
            break;
        }
        w -= grad * config.alpha;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FednlLiteConfig {
    /// Compressor applied to the `d x d` residual `Hess f_i - B_i`.
    pub compressor: CompressorSpec,
    /// Learning rate of `B_i <- B_i + beta C_i`.
    pub beta: f64,
    pub alpha: f64,
    pub max_iterations: u64,
    pub tol: f64,
    /// Start from the local Hessians at `w0` rather than zero.
    pub warm_start: bool,
    pub seed: u64,
    pub record_wall_time: bool,
    pub dense_cap: usize,
}

impl Default for FednlLiteConfig {
    fn default() -> Self {
        Self {
            compressor: CompressorSpec::Identity,
            beta: 1.0,
            alpha: 1.0,
            max_iterations: 500,
            tol: 1e-12,
            warm_start: true,
            seed: 0,
            record_wall_time: true,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

/// Newton-type learning with full-matrix compression. Each worker spends
/// `d` Hessian-vector products per round to form its local Hessian, uploads
/// `64 d` bits of gradient plus the compressed residual, and receives `w`.
/// The server solves `(B + lambda I) p = -grad` with `lambda` the mean
/// Frobenius norm of the compressed residuals.
pub fn run_fednl_lite(objective: &GlobalObjective, config: &FednlLiteConfig, w0: Vector) -> Result<Vec<RunMetrics>> {
    check_step(config.alpha)?;
    config.compressor.validate()?;
    if !(config.beta > 0.0 && config.beta <= 1.0) {
        return Err(FlecsError::config("hessian.beta", format!("must lie in (0, 1], got {}", config.beta)));
    }
    let d = objective.dim();
    if d > config.dense_cap {
        return Err(FlecsError::TooLarge {
            what: "dimension for full-matrix Hessian learning",
            size: d,
            cap: config.dense_cap,
            advice: "use the sketched method instead",
        });
    }
    let n = objective.num_workers();
    let start = Instant::now();
    let identity = Matrix::identity(d, d);
    let mut w = w0;
    let mut b: Vec<Matrix> = if config.warm_start {
        objective
            .locals()
            .iter()
            .map(|f| f.hessian_dense(&w, config.dense_cap))
            .collect::<Result<_>>()?
    } else {
        vec![Matrix::zeros(d, d); n]
    };
    let (mut up, mut down) = (0u64, 0u64);
    let mut hvps = HvpCounter::default();
    let mut rows = Vec::new();
    for k in 0.. {
        down += 64 * (d * n) as u64;
        let mut grad = Vector::zeros(d);
        let mut residuals = Vec::with_capacity(n);
        for (i, f) in objective.locals().iter().enumerate() {
            let g = f.gradient(&w)?;
            let h = f.hessian_sketch(&w, &identity, &mut hvps)?;
            let mut rng = rng::keyed(config.seed, k, i as u64, Stream::Compress);
            let c = compress(&config.compressor, &(h - &b[i]), &mut rng)?;
            up += 64 * d as u64 + c.bit_cost;
            grad += g;
            residuals.push(decompress(&c)?);
        }
        grad /= n as f64;
        let grad_norm_sq = grad.norm_squared();
        rows.push(RunMetrics {
            iter: k,
            loss: objective.value(&w)?,
            grad_norm_sq,
            uplink_bits_cum: up,
            downlink_bits_cum: down,
            hvp_cum: hvps.0,
            wall_ms: wall(&start, config.record_wall_time),
        });
        if grad_norm_sq <= config.tol || k >= config.max_iterations {
            break;
        }
        let lambda = residuals.iter().map(|c| c.norm()).sum::<f64>() / n as f64;
        for (bi, c) in b.iter_mut().zip(&residuals) {
            *bi = symmetrize(&(&*bi + c * config.beta));
        }
        let b_avg = b.iter().fold(Matrix::zeros(d, d), |acc, bi| acc + bi) / n as f64;
        let dir = direction_regularized(&b_avg, &grad, lambda)?;
        w += dir.p * config.alpha;
    }
    Ok(rows)
}
