//! Deterministic in-process simulation of the federated loop.
//!
//! Each call to [`Simulation::step`] performs one full round:
//!
//! 1. every worker receives `w_k` and its own `B_k^i S_k`, evaluates `m`
//!    Hessian-vector products and uploads `(grad_i, M_i, C_i)`;
//! 2. the server rebuilds `Y~_i = C_i + B_k^i S_k`, updates every `B^i`,
//!    averages, computes a search direction and moves
//!    `w_{k+1} = w_k + alpha p_k`;
//! 3. the server regenerates `S_{k+1}` from the run seed and prepares the
//!    next downlinks.
//!
//! Workers run sequentially or on a rayon pool; results are always merged in
//! worker-index order so runs are bit-reproducible either way.

pub mod baseline;
pub mod checkpoint;
pub mod messages;
pub mod metrics;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compress::{decompress, CompressorSpec};
use crate::direction::{
    direction_fedsonia, direction_regularized, direction_truncated_inverse, DirectionResult, DirectionRule,
};
use crate::error::{FlecsError, Result};
use crate::hessian::{update_regularized_identity, HessianRule, ReconstructedSketch, UpdateOutcome, WorkerHessianState};
use crate::numerics::{check_truncation, pinv_sym, symmetrize, PINV_RTOL};
use crate::objective::{GlobalObjective, HvpCounter, DEFAULT_DENSE_CAP};
use crate::sketch::{shared_sketch, SketchFamily, SketchSpec};
use crate::{Matrix, Vector};

pub use messages::{downlink_bits, uplink_bits, worker_step, DownlinkMessage, UplinkMessage};
pub use metrics::{RunMetrics, CSV_HEADER};

/// How the server seeds `B_0^i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialHessian {
    /// Zero for dithering, local Hessian at `w_0` otherwise.
    #[default]
    Auto,
    Zero,
    /// Exact `Hess f_i(w_0)`. Not charged as communication or HVPs.
    LocalHessian,
}

impl InitialHessian {
    pub fn resolve(self, compressor: &CompressorSpec) -> Self {
        match self {
            InitialHessian::Auto => match compressor {
                CompressorSpec::Dither { .. } => InitialHessian::Zero,
                _ => InitialHessian::LocalHessian,
            },
            other => other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlecsConfig {
    pub m: usize,
    pub sketch_family: SketchFamily,
    pub seed: u64,
    pub compressor: CompressorSpec,
    pub hessian: HessianRule,
    pub direction: DirectionRule,
    pub omega: f64,
    pub big_omega: f64,
    pub alpha: f64,
    pub max_iterations: u64,
    pub tol: f64,
    pub init: InitialHessian,
    pub parallel: bool,
    pub record_wall_time: bool,
    /// Byte budget for the dense per-worker approximations on the server.
    pub server_memory_cap: usize,
    /// Largest `d` for which the server runs a dense `d x d` direction rule.
    pub direction_dim_cap: usize,
    /// Largest `d` for which a dense local Hessian is formed.
    pub dense_cap: usize,
}

impl Default for FlecsConfig {
    fn default() -> Self {
        Self {
            m: 16,
            sketch_family: SketchFamily::Gaussian,
            seed: 0,
            compressor: CompressorSpec::Identity,
            hessian: HessianRule::Lsr1,
            direction: DirectionRule::TruncatedInverse,
            omega: 1e-3,
            big_omega: 1e8,
            alpha: 1.0,
            max_iterations: 500,
            tol: 1e-12,
            init: InitialHessian::Auto,
            parallel: false,
            record_wall_time: true,
            server_memory_cap: 4 << 30,
            direction_dim_cap: 6000,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

impl FlecsConfig {
    /// Benchmark setting: `m = 16`, `omega = 1e-3`,
    /// `Omega = 1e8`, `alpha = 1`, top-K with `K = 4d`, truncated L-SR1 and
    /// the truncated inverse direction.
    pub fn benchmark_defaults(d: usize) -> Self {
        Self {
            compressor: CompressorSpec::TopK { k: 4 * d },
            ..Self::default()
        }
    }

    pub fn sketch_spec(&self) -> SketchSpec {
        SketchSpec {
            m: self.m,
            family: self.sketch_family,
            run_seed: self.seed,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        check_truncation(self.omega, self.big_omega)?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(FlecsError::config("direction.alpha", format!("must be positive, got {}", self.alpha)));
        }
        if self.m == 0 || self.m > d {
            return Err(FlecsError::config("sketch.m", format!("must lie in [1, d={d}], got {}", self.m)));
        }
        if !(self.tol >= 0.0) {
            return Err(FlecsError::config("run.tol", "must be >= 0"));
        }
        if let DirectionRule::FedSonia { rho } = self.direction {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(FlecsError::config("direction.rho", format!("must be positive, got {rho}")));
            }
        }
        self.hessian.validate()?;
        self.compressor.validate()
    }

    /// Direct updates with `beta = 1`, FedSONIA and a zero start never need
    /// the dense approximations: `B^i = Y~_i M_i^+ Y~_i^T` is kept factored.
    fn uses_factored_storage(&self) -> bool {
        matches!(self.hessian, HessianRule::Direct { beta } if beta == 1.0)
            && matches!(self.direction, DirectionRule::FedSonia { .. })
            && self.init.resolve(&self.compressor) == InitialHessian::Zero
    }
}

/// `B = Y M^+ Y^T` kept in factored form (`d x m` and `m x m`).
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredHessian {
    pub y_tilde: Matrix,
    pub m_pinv: Matrix,
}

impl FactoredHessian {
    pub fn zero(d: usize) -> Self {
        Self {
            y_tilde: Matrix::zeros(d, 0),
            m_pinv: Matrix::zeros(0, 0),
        }
    }

    pub fn times(&self, s: &Matrix) -> Matrix {
        if self.y_tilde.ncols() == 0 {
            return Matrix::zeros(self.y_tilde.nrows(), s.ncols());
        }
        &self.y_tilde * (&self.m_pinv * (self.y_tilde.transpose() * s))
    }

    pub fn dense(&self) -> Matrix {
        let d = self.y_tilde.nrows();
        if self.y_tilde.ncols() == 0 {
            return Matrix::zeros(d, d);
        }
        symmetrize(&(&self.y_tilde * &self.m_pinv * self.y_tilde.transpose()))
    }
}

/// Server-side approximations, dense or factored.
#[derive(Clone, Debug, PartialEq)]
pub enum ServerHessians {
    Dense(Vec<WorkerHessianState>),
    Factored(Vec<FactoredHessian>),
}

impl ServerHessians {
    fn len(&self) -> usize {
        match self {
            ServerHessians::Dense(v) => v.len(),
            ServerHessians::Factored(v) => v.len(),
        }
    }

    fn times(&self, i: usize, s: &Matrix) -> Matrix {
        match self {
            ServerHessians::Dense(v) => &v[i].b * s,
            ServerHessians::Factored(v) => v[i].times(s),
        }
    }

    fn dense(&self, i: usize) -> Matrix {
        match self {
            ServerHessians::Dense(v) => v[i].b.clone(),
            ServerHessians::Factored(v) => v[i].dense(),
        }
    }
}

/// Everything needed to continue a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunState {
    pub k: u64,
    pub w: Vector,
    pub hessians: ServerHessians,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    pub worker_hvps: Vec<HvpCounter>,
    pub wall_ms: f64,
    pub converged: bool,
    pub finished: bool,
}

impl RunState {
    pub fn hvp_total(&self) -> u64 {
        self.worker_hvps.iter().map(|c| c.0).sum()
    }
}

/// Outcome of one round.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub row: RunMetrics,
    pub uplinks: Vec<UplinkMessage>,
    /// `None` when the round ended the run before the server step.
    pub direction: Option<DirectionResult>,
    pub outcomes: Vec<UpdateOutcome>,
    pub finished: bool,
}

pub struct Simulation<'a> {
    objective: &'a GlobalObjective,
    config: FlecsConfig,
    state: RunState,
    sketch: Matrix,
    downlinks: Vec<DownlinkMessage>,
    segment_start: Instant,
}

impl<'a> Simulation<'a> {
    pub fn new(objective: &'a GlobalObjective, config: FlecsConfig, w0: Vector) -> Result<Self> {
        let d = objective.dim();
        let n = objective.num_workers();
        config.validate(d)?;
        if w0.len() != d {
            return Err(FlecsError::Dimension(format!("w0 has length {}, expected {d}", w0.len())));
        }
        let hessians = if config.uses_factored_storage() {
            ServerHessians::Factored(vec![FactoredHessian::zero(d); n])
        } else {
            let bytes = n.saturating_mul(d).saturating_mul(d).saturating_mul(8);
            if bytes > config.server_memory_cap {
                return Err(FlecsError::TooLarge {
                    what: "dense server Hessian storage (bytes)",
                    size: bytes,
                    cap: config.server_memory_cap,
                    advice: "use the direct update with beta = 1, the FedSONIA direction and a zero start, which keeps the approximations factored",
                });
            }
            let init = config.init.resolve(&config.compressor);
            let states = objective
                .locals()
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    Ok(match init {
                        InitialHessian::LocalHessian => WorkerHessianState::new(i, f.hessian_dense(&w0, config.dense_cap)?),
                        _ => WorkerHessianState::zeros(i, d),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ServerHessians::Dense(states)
        };
        let state = RunState {
            k: 0,
            w: w0,
            hessians,
            uplink_bits: 0,
            downlink_bits: 0,
            worker_hvps: vec![HvpCounter::default(); n],
            wall_ms: 0.0,
            converged: false,
            finished: false,
        };
        let mut sim = Self::from_state(objective, config, state)?;
        sim.state.downlink_bits += sim.downlinks.iter().map(|m| m.bit_cost).sum::<u64>();
        Ok(sim)
    }

    /// Rebuilds a simulation around an existing state (used on resume). The
    /// downlinks of round `state.k` are assumed to be already charged.
    pub fn from_state(objective: &'a GlobalObjective, config: FlecsConfig, state: RunState) -> Result<Self> {
        let d = objective.dim();
        config.validate(d)?;
        if state.w.len() != d || state.hessians.len() != objective.num_workers() || state.worker_hvps.len() != objective.num_workers() {
            return Err(FlecsError::Dimension("run state does not match the objective".into()));
        }
        if matches!(config.direction, DirectionRule::TruncatedInverse | DirectionRule::Regularized) && d > config.direction_dim_cap {
            return Err(FlecsError::TooLarge {
                what: "dimension for a dense direction rule",
                size: d,
                cap: config.direction_dim_cap,
                advice: "use the FedSONIA direction, which works in the sketched subspace",
            });
        }
        let sketch = shared_sketch(&config.sketch_spec(), state.k, d)?;
        let downlinks = build_downlinks(&state, &sketch);
        Ok(Self {
            objective,
            config,
            state,
            sketch,
            downlinks,
            segment_start: Instant::now(),
        })
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn config(&self) -> &FlecsConfig {
        &self.config
    }

    pub fn objective(&self) -> &GlobalObjective {
        self.objective
    }

    pub fn sketch(&self) -> &Matrix {
        &self.sketch
    }

    pub fn downlinks(&self) -> &[DownlinkMessage] {
        &self.downlinks
    }

    /// Dense copy of worker `i`'s approximation.
    pub fn hessian(&self, i: usize) -> Matrix {
        self.state.hessians.dense(i)
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished
    }

    fn elapsed_ms(&self) -> f64 {
        if self.config.record_wall_time {
            self.state.wall_ms + self.segment_start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    }

    fn run_workers(&mut self) -> Result<Vec<UplinkMessage>> {
        let locals = self.objective.locals();
        let (s, cfg) = (&self.sketch, &self.config);
        let job = |(i, (hvps, down)): (usize, (&mut HvpCounter, &DownlinkMessage))| {
            worker_step(&locals[i], i, down, s, &cfg.compressor, cfg.seed, hvps)
        };
        let counters = self.state.worker_hvps.iter_mut().zip(self.downlinks.iter());
        if cfg.parallel {
            let counters: Vec<_> = counters.collect();
            counters.into_par_iter().enumerate().map(job).collect()
        } else {
            counters.enumerate().map(job).collect()
        }
    }

    /// One full round. Errors if the run has already finished.
    pub fn step(&mut self) -> Result<StepReport> {
        if self.state.finished {
            return Err(FlecsError::config("run", "simulation already finished"));
        }
        let n = self.objective.num_workers();
        let d = self.objective.dim();

        let uplinks = self.run_workers()?;
        self.state.uplink_bits += uplinks.iter().map(|u| u.bit_cost).sum::<u64>();
        let grad = uplinks.iter().fold(Vector::zeros(d), |acc, u| acc + &u.grad) / n as f64;
        let grad_norm_sq = grad.norm_squared();
        let row = RunMetrics {
            iter: self.state.k,
            loss: self.objective.value(&self.state.w)?,
            grad_norm_sq,
            uplink_bits_cum: self.state.uplink_bits,
            downlink_bits_cum: self.state.downlink_bits,
            hvp_cum: self.state.hvp_total(),
            wall_ms: self.elapsed_ms(),
        };

        if grad_norm_sq <= self.config.tol {
            self.state.converged = true;
            self.state.finished = true;
        } else if self.state.k >= self.config.max_iterations {
            self.state.finished = true;
        }
        if self.state.finished {
            self.state.wall_ms = row.wall_ms;
            return Ok(StepReport {
                row,
                uplinks,
                direction: None,
                outcomes: Vec::new(),
                finished: true,
            });
        }

        let (direction, outcomes) = self.server_step(&uplinks, &grad)?;
        self.state.w += &direction.p * self.config.alpha;
        self.state.k += 1;
        self.sketch = shared_sketch(&self.config.sketch_spec(), self.state.k, d)?;
        self.downlinks = build_downlinks(&self.state, &self.sketch);
        self.state.downlink_bits += self.downlinks.iter().map(|m| m.bit_cost).sum::<u64>();

        Ok(StepReport {
            row,
            uplinks,
            direction: Some(direction),
            outcomes,
            finished: false,
        })
    }

    fn server_step(&mut self, uplinks: &[UplinkMessage], grad: &Vector) -> Result<(DirectionResult, Vec<UpdateOutcome>)> {
        let n = uplinks.len();
        let d = grad.len();
        let m = self.config.m;
        let s = &self.sketch;

        let recon = uplinks
            .iter()
            .zip(&self.downlinks)
            .map(|(u, down)| {
                Ok(ReconstructedSketch {
                    y_tilde: decompress(&u.c)? + &down.bs,
                    m: symmetrize(&u.m),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let (rule, omega, parallel) = (self.config.hessian, self.config.omega, self.config.parallel);
        let outcomes = match &mut self.state.hessians {
            ServerHessians::Dense(states) => {
                let job = |(st, r): (&mut WorkerHessianState, &ReconstructedSketch)| st.apply(&rule, r, s, omega);
                if parallel {
                    states.par_iter_mut().zip(recon.par_iter()).map(job).collect::<Result<Vec<_>>>()?
                } else {
                    states.iter_mut().zip(recon.iter()).map(job).collect::<Result<Vec<_>>>()?
                }
            }
            ServerHessians::Factored(factors) => factors
                .iter_mut()
                .zip(&recon)
                .map(|(f, r)| match pinv_sym(&r.m, PINV_RTOL) {
                    Ok(m_pinv) => {
                        *f = FactoredHessian {
                            y_tilde: r.y_tilde.clone(),
                            m_pinv,
                        };
                        UpdateOutcome::Applied
                    }
                    Err(e) => {
                        log::warn!("factored update failed ({e}); keeping previous");
                        UpdateOutcome::Skipped
                    }
                })
                .collect(),
        };

        let result = match self.config.direction {
            DirectionRule::TruncatedInverse => {
                direction_truncated_inverse(&self.aggregate_hessian(), grad, omega, self.config.big_omega)
            }
            DirectionRule::FedSonia { rho } => {
                let y_avg = recon.iter().fold(Matrix::zeros(d, m), |acc, r| acc + &r.y_tilde) / n as f64;
                let m_avg = recon.iter().fold(Matrix::zeros(m, m), |acc, r| acc + &r.m) / n as f64;
                direction_fedsonia(&y_avg, &m_avg, grad, omega, self.config.big_omega, rho)
            }
            DirectionRule::Regularized => {
                let norms = uplinks
                    .iter()
                    .map(|u| decompress(&u.c).map(|c| c.norm()))
                    .collect::<Result<Vec<_>>>()?;
                let shifted = update_regularized_identity(&self.aggregate_hessian(), &norms);
                direction_regularized(&shifted, grad, 0.0)
            }
        };
        let direction = result.unwrap_or_else(|e| {
            log::warn!("iteration {}: direction failed ({e}); taking a gradient step", self.state.k);
            DirectionResult::gradient_step(grad)
        });
        Ok((direction, outcomes))
    }

    /// `(1/n) sum_i B^i`.
    pub fn aggregate_hessian(&self) -> Matrix {
        let n = self.state.hessians.len();
        let d = self.objective.dim();
        (0..n).fold(Matrix::zeros(d, d), |acc, i| acc + self.state.hessians.dense(i)) / n as f64
    }

    /// Steps until the run finishes, returning one metrics row per round.
    pub fn run(&mut self) -> Result<Vec<RunMetrics>> {
        let mut rows = Vec::new();
        while !self.state.finished {
            rows.push(self.step()?.row);
        }
        Ok(rows)
    }

    /// Current state with the wall clock folded in, ready for a checkpoint.
    pub fn snapshot(&self) -> RunState {
        let mut st = self.state.clone();
        st.wall_ms = self.elapsed_ms();
        st
    }
}

fn build_downlinks(state: &RunState, sketch: &Matrix) -> Vec<DownlinkMessage> {
    (0..state.hessians.len())
        .map(|i| DownlinkMessage::new(state.k, state.w.clone(), state.hessians.times(i, sketch)))
        .collect()
}

/// Runs the federated method to completion from `w0`.
pub fn run(objective: &GlobalObjective, config: FlecsConfig, w0: Vector) -> Result<Vec<RunMetrics>> {
    Simulation::new(objective, config, w0)?.run()
}

#[cfg(test)]
mod tests;
