//! Shared sketch matrices.
//!
//! `S_k` is a pure function of `(run_seed, k, d, m, family)`, so the server
//! and every worker regenerate the same matrix locally instead of sending it.

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FlecsError, Result};
use crate::rng::{self, Stream, SHARED_NODE};
use crate::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchFamily {
    /// i.i.d. standard normal entries.
    #[default]
    Gaussian,
    /// `m` distinct standard basis vectors.
    Coordinate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchSpec {
    pub m: usize,
    pub family: SketchFamily,
    pub run_seed: u64,
}

/// Attempts made by [`shared_sketch`] before giving up on full rank.
const MAX_RESAMPLES: u64 = 8;

fn generate(spec: &SketchSpec, k: u64, d: usize, salt: u64) -> Matrix {
    let mut rng = rng::keyed(spec.run_seed, k, SHARED_NODE - salt, Stream::Sketch);
    match spec.family {
        SketchFamily::Gaussian => {
            let mut s = Matrix::zeros(d, spec.m);
            for x in s.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            s
        }
        SketchFamily::Coordinate => {
            let mut s = Matrix::zeros(d, spec.m);
            for (col, row) in index::sample(&mut rng, d, spec.m).into_iter().enumerate() {
                s[(row, col)] = 1.0;
            }
            s
        }
    }
}

/// The sketch for iteration `k`.
pub fn sketch_at(spec: &SketchSpec, k: u64, d: usize) -> Result<Matrix> {
    if spec.m == 0 {
        return Err(FlecsError::config("sketch.m", "must be at least 1"));
    }
    if spec.m > d {
        return Err(FlecsError::config("sketch.m", format!("m={} exceeds dimension d={d}", spec.m)));
    }
    Ok(generate(spec, k, d, 0))
}

/// True iff the smallest singular value exceeds `1e-10` times the largest.
pub fn rank_check(s: &Matrix) -> bool {
    if s.ncols() == 0 || s.nrows() < s.ncols() {
        return false;
    }
    let sv = s.clone().singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() > 1e-10 * max
}

/// [`sketch_at`] followed by a rank check; a rank-deficient draw is replaced
/// by a salted redraw, identically on every node.
pub fn shared_sketch(spec: &SketchSpec, k: u64, d: usize) -> Result<Matrix> {
    let mut s = sketch_at(spec, k, d)?;
    let mut salt = 0;
    while !rank_check(&s) {
        salt += 1;
        if salt > MAX_RESAMPLES {
            log::warn!("sketch at iteration {k} still rank deficient after {MAX_RESAMPLES} redraws");
            break;
        }
        log::warn!("sketch at iteration {k} is rank deficient; redrawing with salt {salt}");
        s = generate(spec, k, d, salt);
    }
    Ok(s)
}
