//! Federated second-order optimization with sketched, compressed Hessian
//! learning.
//!
//! The server keeps one dense `d x d` Hessian approximation per worker.
//! Each iteration every worker computes `m` Hessian-vector products against a
//! shared sketch `S_k` (regenerated from the run seed, never transmitted),
//! sends its gradient, the small `m x m` matrix `S_k^T Y_k`, and a compressed
//! error-feedback residual `C(Y_k - B_k S_k)`. The server rebuilds `Y_k`,
//! updates each `B_k^i` (truncated L-SR1 or the direct update), and takes a
//! step along a search direction whose preconditioner is spectrally bounded.
//!
//! Module layout:
//!
//! - [`dataset`]: LIBSVM parsing, row partitioning, synthetic problems.
//! - [`objective`]: local losses with gradient, Hessian-sketch and dense
//!   Hessian oracles.
//! - [`sketch`]: seeded sketch matrices shared by every node.
//! - [`compress`]: Top-K, Rand-K, random dithering and identity compressors
//!   with bit accounting.
//! - [`numerics`]: eigendecomposition, QR, pseudo-inverse and the two
//!   eigenvalue truncation rules.
//! - [`hessian`]: server-side Hessian learning rules.
//! - [`direction`]: search directions.
//! - [`federation`]: the in-process simulator, baselines and checkpoints.
//! - [`theory`]: step-size and spectral-bound helpers used to check the
//!   convergence guarantees.
//! - [`experiment`]: configuration files, the experiment runner, sweeps and
//!   CSV merging used by the `flecs` binary.

pub mod compress;
pub mod dataset;
pub mod direction;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod hessian;
pub mod numerics;
pub mod objective;
pub mod rng;
pub mod sketch;
pub mod theory;

pub use error::{FlecsError, Result};

/// Dense column-major matrix used throughout.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense vector used throughout.
pub type Vector = nalgebra::DVector<f64>;
