//! Wire payloads exchanged each iteration and the worker-side step.
//!
//! Workers only ever see `d`-vectors, `d x m` blocks and `m x m` blocks; no
//! message carries a `d x d` matrix.

use crate::compress::{compress, CompressedBlock, CompressorSpec};
use crate::error::{FlecsError, Result};
use crate::numerics::symmetrize;
use crate::objective::{HvpCounter, LocalObjective};
use crate::rng::{self, Stream};
use crate::{Matrix, Vector};

/// Server to worker: the iterate and this worker's `B^i S`.
#[derive(Clone, Debug, PartialEq)]
pub struct DownlinkMessage {
    pub iteration: u64,
    pub w: Vector,
    pub bs: Matrix,
    pub bit_cost: u64,
}

impl DownlinkMessage {
    pub fn new(iteration: u64, w: Vector, bs: Matrix) -> Self {
        let bit_cost = downlink_bits(w.len(), bs.ncols());
        Self {
            iteration,
            w,
            bs,
            bit_cost,
        }
    }
}

/// Worker to server: local gradient, `S^T Y` and the compressed residual.
#[derive(Clone, Debug, PartialEq)]
pub struct UplinkMessage {
    pub worker_id: usize,
    pub grad: Vector,
    /// Symmetric; only its upper triangle is charged.
    pub m: Matrix,
    pub c: CompressedBlock,
    pub bit_cost: u64,
}

/// `64 (d + d m)`.
pub fn downlink_bits(d: usize, m: usize) -> u64 {
    64 * (d + d * m) as u64
}

/// `64 d + 64 m (m + 1) / 2 + bits(C)`.
pub fn uplink_bits(d: usize, m: usize, compressed_bits: u64) -> u64 {
    64 * d as u64 + 64 * (m * (m + 1) / 2) as u64 + compressed_bits
}

/// One worker's computation for the current iteration.
///
/// Forms `Y = Hess f_i(w) S` with `m` Hessian-vector products, `M = S^T Y`,
/// and `C = C(Y - B^i S)` with compression noise keyed by
/// `(run_seed, iteration, worker_id)`.
pub fn worker_step(
    objective: &LocalObjective,
    worker_id: usize,
    down: &DownlinkMessage,
    s: &Matrix,
    compressor: &CompressorSpec,
    run_seed: u64,
    hvps: &mut HvpCounter,
) -> Result<UplinkMessage> {
    if down.bs.shape() != s.shape() {
        return Err(FlecsError::Dimension(format!(
            "downlink B S is {:?}, sketch is {:?}",
            down.bs.shape(),
            s.shape()
        )));
    }
    let y = objective.hessian_sketch(&down.w, s, hvps)?;
    let m = symmetrize(&(s.transpose() * &y));
    let mut rng = rng::keyed(run_seed, down.iteration, worker_id as u64, Stream::Compress);
    let c = compress(compressor, &(y - &down.bs), &mut rng)?;
    let grad = objective.gradient(&down.w)?;
    let bit_cost = uplink_bits(s.nrows(), s.ncols(), c.bit_cost);
    Ok(UplinkMessage {
        worker_id,
        grad,
        m,
        c,
        bit_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::{decompress, Payload};
    use crate::dataset::synthetic_quadratic;

    fn setup() -> (LocalObjective, Matrix, Vector) {
        let q = synthetic_quadratic(6, 0.5, 2.0, 1, 3).unwrap();
        let f = LocalObjective::quadratic(q.hessians[0].clone(), q.linear_terms[0].clone()).unwrap();
        let s = Matrix::from_fn(6, 2, |r, c| ((r + 7 * c) as f64).cos());
        (f, s, Vector::from_element(6, 0.3))
    }

    #[test]
    fn identity_error_feedback_recovers_y() {
        let (f, s, w) = setup();
        let bs = Matrix::from_element(6, 2, 0.25);
        let down = DownlinkMessage::new(0, w.clone(), bs.clone());
        let mut hvps = HvpCounter::default();
        let up = worker_step(&f, 0, &down, &s, &CompressorSpec::Identity, 1, &mut hvps).unwrap();
        let y = f.hessian_sketch(&w, &s, &mut HvpCounter::default()).unwrap();
        assert!((decompress(&up.c).unwrap() + bs - &y).amax() < 1e-15);
        assert_eq!(hvps, HvpCounter(2));
        assert_eq!(up.m, up.m.transpose());
        assert_eq!(up.bit_cost, 64 * 6 + 64 * 3 + 64 * 12);
        assert_eq!(down.bit_cost, 64 * (6 + 12));
    }

    #[test]
    fn perfect_approximation_sends_zero() {
        let (f, s, w) = setup();
        let y = f.hessian_sketch(&w, &s, &mut HvpCounter::default()).unwrap();
        let down = DownlinkMessage::new(4, w, y);
        let up = worker_step(&f, 2, &down, &s, &CompressorSpec::TopK { k: 3 }, 1, &mut HvpCounter::default()).unwrap();
        match &up.c.payload {
            Payload::Sparse { values, .. } => assert!(values.iter().all(|&v| v == 0.0)),
            other => panic!("{other:?}"),
        }
        assert_eq!(decompress(&up.c).unwrap(), Matrix::zeros(6, 2));
    }

    #[test]
    fn mismatched_downlink_rejected() {
        let (f, s, w) = setup();
        let down = DownlinkMessage::new(0, w, Matrix::zeros(6, 3));
        assert!(worker_step(&f, 0, &down, &s, &CompressorSpec::Identity, 1, &mut HvpCounter::default()).is_err());
    }

    #[test]
    fn workers_draw_independent_noise() {
        let (f, s, w) = setup();
        let down = DownlinkMessage::new(0, w, Matrix::zeros(6, 2));
        let spec = CompressorSpec::RandK { k: 3 };
        let a = worker_step(&f, 0, &down, &s, &spec, 1, &mut HvpCounter::default()).unwrap();
        let b = worker_step(&f, 1, &down, &s, &spec, 1, &mut HvpCounter::default()).unwrap();
        let a2 = worker_step(&f, 0, &down, &s, &spec, 1, &mut HvpCounter::default()).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a.c, b.c);
    }
}
