//! Matrix compressors and their bit costs.
//!
//! Bit-cost contract (per compressed `d x m` block):
//!
//! | compressor | bits |
//! |------------|------|
//! | identity   | `64 d m` |
//! | top-K, rand-K | `K (64 + ceil(log2(d m)))` |
//! | dithering with `s` levels | `m (64 + d (1 + ceil(log2(s + 1))))` |
//!
//! Top-K is contractive: `||C(X) - X||_F^2 <= (1 - K/(dm)) ||X||_F^2`.
//! Rand-K and dithering are unbiased: `E[C(X)] = X`.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FlecsError, Result};
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressorSpec {
    Identity,
    /// Keep the `k` largest-magnitude entries of the flattened matrix.
    TopK { k: usize },
    /// Keep `k` uniformly chosen entries, rescaled by `dm / k`.
    RandK { k: usize },
    /// Per-column random dithering against the column's infinity norm.
    Dither { levels: u32 },
}

impl CompressorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CompressorSpec::TopK { k } | CompressorSpec::RandK { k } if k == 0 => {
                Err(FlecsError::config("compressor.k", "must be at least 1"))
            }
            CompressorSpec::Dither { levels: 0 } => Err(FlecsError::config("compressor.levels", "must be at least 1")),
            _ => Ok(()),
        }
    }

    pub fn is_unbiased(&self) -> bool {
        matches!(self, CompressorSpec::Identity | CompressorSpec::RandK { .. } | CompressorSpec::Dither { .. })
    }
}

/// One dithered column: its infinity norm and a signed level per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct DitherColumn {
    pub norm: f64,
    pub codes: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// Column-major values.
    Dense(Vec<f64>),
    /// Column-major flat indices with their (already rescaled) values.
    Sparse { indices: Vec<u32>, values: Vec<f64> },
    Dither { levels: u32, columns: Vec<DitherColumn> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedBlock {
    pub rows: usize,
    pub cols: usize,
    pub payload: Payload,
    pub bit_cost: u64,
}

pub fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        u64::from(64 - (x - 1).leading_zeros())
    }
}

pub fn dense_bits(rows: usize, cols: usize) -> u64 {
    64 * (rows * cols) as u64
}

pub fn sparse_bits(k: usize, rows: usize, cols: usize) -> u64 {
    k as u64 * (64 + ceil_log2((rows * cols) as u64))
}

pub fn dither_bits(levels: u32, rows: usize, cols: usize) -> u64 {
    cols as u64 * (64 + rows as u64 * (1 + ceil_log2(u64::from(levels) + 1)))
}

/// Bits the given compressor spends on a `rows x cols` block, after clamping
/// `K` to the block size.
pub fn block_bits(spec: &CompressorSpec, rows: usize, cols: usize) -> u64 {
    match *spec {
        CompressorSpec::Identity => dense_bits(rows, cols),
        CompressorSpec::TopK { k } | CompressorSpec::RandK { k } => sparse_bits(k.min(rows * cols), rows, cols),
        CompressorSpec::Dither { levels } => dither_bits(levels, rows, cols),
    }
}

fn clamp_k(k: usize, len: usize) -> usize {
    if k > len {
        log::warn!("compressor K={k} exceeds block size {len}; clamping");
        len
    } else {
        k
    }
}

/// Compresses `x`. Randomized compressors draw from `rng`.
pub fn compress<R: Rng + ?Sized>(spec: &CompressorSpec, x: &Matrix, rng: &mut R) -> Result<CompressedBlock> {
    spec.validate()?;
    crate::numerics::ensure_finite(x, "compressor input")?;
    let (rows, cols) = x.shape();
    let len = rows * cols;
    let flat = x.as_slice();
    let payload = match *spec {
        CompressorSpec::Identity => Payload::Dense(flat.to_vec()),
        CompressorSpec::TopK { k } => {
            let k = clamp_k(k, len);
            let mut order: Vec<usize> = (0..len).collect();
            order.sort_by(|&a, &b| flat[b].abs().total_cmp(&flat[a].abs()).then(a.cmp(&b)));
            let mut keep = order[..k].to_vec();
            keep.sort_unstable();
            Payload::Sparse {
                indices: keep.iter().map(|&i| i as u32).collect(),
                values: keep.iter().map(|&i| flat[i]).collect(),
            }
        }
        CompressorSpec::RandK { k } => {
            let k = clamp_k(k, len);
            let scale = len as f64 / k as f64;
            let mut keep = index::sample(rng, len, k).into_vec();
            keep.sort_unstable();
            Payload::Sparse {
                indices: keep.iter().map(|&i| i as u32).collect(),
                values: keep.iter().map(|&i| flat[i] * scale).collect(),
            }
        }
        CompressorSpec::Dither { levels } => {
            let s = f64::from(levels);
            let columns = x
                .column_iter()
                .map(|col| {
                    let norm = col.amax();
                    if norm == 0.0 {
                        return DitherColumn {
                            norm: 0.0,
                            codes: vec![0; rows],
                        };
                    }
                    let codes = col
                        .iter()
                        .map(|&v| {
                            let u = (s * v.abs() / norm).min(s);
                            let lower = u.floor();
                            let level = if rng.random::<f64>() < u - lower { lower + 1.0 } else { lower };
                            let level = level as i32;
                            if v < 0.0 {
                                -level
                            } else {
                                level
                            }
                        })
                        .collect();
                    DitherColumn { norm, codes }
                })
                .collect();
            Payload::Dither { levels, columns }
        }
    };
    let bit_cost = match &payload {
        Payload::Dense(_) => dense_bits(rows, cols),
        Payload::Sparse { indices, .. } => sparse_bits(indices.len(), rows, cols),
        Payload::Dither { levels, .. } => dither_bits(*levels, rows, cols),
    };
    Ok(CompressedBlock {
        rows,
        cols,
        payload,
        bit_cost,
    })
}

/// Reconstructs the matrix a block encodes.
pub fn decompress(block: &CompressedBlock) -> Result<Matrix> {
    let (rows, cols) = (block.rows, block.cols);
    let len = rows * cols;
    let corrupt = |msg: String| FlecsError::CorruptPayload(msg);
    match &block.payload {
        Payload::Dense(values) => {
            if values.len() != len {
                return Err(corrupt(format!("{} dense values for a {rows}x{cols} block", values.len())));
            }
            Ok(Matrix::from_column_slice(rows, cols, values))
        }
        Payload::Sparse { indices, values } => {
            if indices.len() != values.len() {
                return Err(corrupt("sparse index/value lengths differ".into()));
            }
            let mut out = Matrix::zeros(rows, cols);
            let flat = out.as_mut_slice();
            let mut prev: Option<u32> = None;
            for (&i, &v) in indices.iter().zip(values) {
                if i as usize >= len || prev.is_some_and(|p| p >= i) {
                    return Err(corrupt(format!("sparse index {i} out of order or range")));
                }
                flat[i as usize] = v;
                prev = Some(i);
            }
            Ok(out)
        }
        Payload::Dither { levels, columns } => {
            if columns.len() != cols || *levels == 0 {
                return Err(corrupt(format!("{} dithered columns for {cols} expected", columns.len())));
            }
            let s = f64::from(*levels);
            let mut out = Matrix::zeros(rows, cols);
            for (c, col) in columns.iter().enumerate() {
                if col.codes.len() != rows || !(col.norm >= 0.0 && col.norm.is_finite()) {
                    return Err(corrupt(format!("dithered column {c} malformed")));
                }
                for (r, &code) in col.codes.iter().enumerate() {
                    if code.unsigned_abs() > *levels {
                        return Err(corrupt(format!("level {code} exceeds {levels}")));
                    }
                    out[(r, c)] = col.norm * f64::from(code) / s;
                }
            }
            Ok(out)
        }
    }
}

/// Contraction constant `delta` for contractive compressors: `K/(dm)` for
/// top-K and `1` for the identity. `None` for the unbiased randomized
/// compressors.
pub fn contraction_delta(spec: &CompressorSpec, d: usize, m: usize) -> Option<f64> {
    match *spec {
        CompressorSpec::Identity => Some(1.0),
        CompressorSpec::TopK { k } => Some(k.min(d * m) as f64 / (d * m) as f64),
        CompressorSpec::RandK { .. } | CompressorSpec::Dither { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_oneof, proptest, Just};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(99)
    }

    #[test]
    fn top_k_keeps_largest() {
        let x = Matrix::from_column_slice(3, 1, &[3.0, -1.0, 0.5]);
        let block = compress(&CompressorSpec::TopK { k: 1 }, &x, &mut rng()).unwrap();
        assert_eq!(decompress(&block).unwrap().as_slice(), &[3.0, 0.0, 0.0]);
        assert_eq!(block.bit_cost, 64 + 2);
    }

    #[test]
    fn top_k_ties_prefer_low_index() {
        let x = Matrix::from_column_slice(2, 2, &[1.0, -2.0, 2.0, 2.0]);
        let block = compress(&CompressorSpec::TopK { k: 2 }, &x, &mut rng()).unwrap();
        assert_eq!(decompress(&block).unwrap().as_slice(), &[0.0, -2.0, 2.0, 0.0]);
    }

    #[test]
    fn k_clamped_to_block() {
        let x = Matrix::from_fn(2, 2, |r, c| (r + 2 * c) as f64);
        let block = compress(&CompressorSpec::TopK { k: 10 }, &x, &mut rng()).unwrap();
        assert_eq!(decompress(&block).unwrap(), x);
        assert_eq!(block.bit_cost, sparse_bits(4, 2, 2));
        assert_eq!(contraction_delta(&CompressorSpec::TopK { k: 4 }, 2, 2), Some(1.0));
        assert_eq!(contraction_delta(&CompressorSpec::TopK { k: 1 }, 2, 2), Some(0.25));
        assert_eq!(contraction_delta(&CompressorSpec::Identity, 2, 2), Some(1.0));
        assert_eq!(contraction_delta(&CompressorSpec::Dither { levels: 4 }, 2, 2), None);
    }

    #[test]
    fn dither_zero_column() {
        let x = Matrix::zeros(4, 2);
        let block = compress(&CompressorSpec::Dither { levels: 8 }, &x, &mut rng()).unwrap();
        match &block.payload {
            Payload::Dither { columns, .. } => assert!(columns.iter().all(|c| c.norm == 0.0)),
            other => panic!("{other:?}"),
        }
        assert_eq!(decompress(&block).unwrap(), x);
        assert_eq!(block.bit_cost, dither_bits(8, 4, 2));
    }

    #[test]
    fn dither_single_level_hits_max_exactly() {
        let x = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        for seed in 0..20 {
            let block = compress(&CompressorSpec::Dither { levels: 1 }, &x, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(decompress(&block).unwrap(), x);
        }
    }

    #[test]
    fn dither_values_on_grid() {
        let mut r = rng();
        let x = Matrix::from_fn(6, 3, |_, _| r.random_range(-5.0..5.0));
        let levels = 4;
        let block = compress(&CompressorSpec::Dither { levels }, &x, &mut r).unwrap();
        let y = decompress(&block).unwrap();
        for c in 0..3 {
            let norm = x.column(c).amax();
            for &v in y.column(c).iter() {
                let step = v.abs() / (norm / f64::from(levels));
                assert!((step - step.round()).abs() < 1e-9 && step.round() <= f64::from(levels));
            }
        }
    }

    #[test]
    fn identity_round_trip_exact() {
        let mut r = rng();
        let x = Matrix::from_fn(7, 3, |_, _| r.random_range(-1.0..1.0));
        let block = compress(&CompressorSpec::Identity, &x, &mut r).unwrap();
        assert_eq!(decompress(&block).unwrap(), x);
        assert_eq!(block.bit_cost, 64 * 21);
    }

    #[test]
    fn top_k_sparsity() {
        let mut r = rng();
        let x = Matrix::from_fn(10, 4, |_, _| r.random_range(-1.0..1.0));
        let y = decompress(&compress(&CompressorSpec::TopK { k: 7 }, &x, &mut r).unwrap()).unwrap();
        assert!(y.iter().filter(|v| **v != 0.0).count() <= 7);
    }

    #[test]
    fn bit_formulas() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(129), 8);
        assert_eq!(ceil_log2(128), 7);
        assert_eq!(dither_bits(128, 123, 16), 16 * (64 + 123 * 9));
        assert_eq!(sparse_bits(492, 123, 16), 492 * (64 + 11));
        // Additive over columns.
        assert_eq!(dither_bits(7, 10, 3) + dither_bits(7, 10, 2), dither_bits(7, 10, 5));
        assert_eq!(dense_bits(10, 3) + dense_bits(10, 2), dense_bits(10, 5));
    }

    #[test]
    fn corrupt_payloads_rejected() {
        let bad = CompressedBlock {
            rows: 2,
            cols: 1,
            payload: Payload::Sparse { indices: vec![5], values: vec![1.0] },
            bit_cost: 0,
        };
        assert!(matches!(decompress(&bad), Err(FlecsError::CorruptPayload(_))));
        let bad = CompressedBlock {
            rows: 2,
            cols: 1,
            payload: Payload::Dither { levels: 2, columns: vec![DitherColumn { norm: 1.0, codes: vec![3, 0] }] },
            bit_cost: 0,
        };
        assert!(decompress(&bad).is_err());
        let bad = CompressedBlock { rows: 2, cols: 2, payload: Payload::Dense(vec![0.0; 3]), bit_cost: 0 };
        assert!(decompress(&bad).is_err());
    }

    fn mean_within_sigma(spec: CompressorSpec, sigmas: f64) {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_fn(5, 3, |_, _| r.random_range(-2.0..2.0));
        let draws = 10_000;
        let mut sum = Matrix::zeros(5, 3);
        let mut sum_sq = Matrix::zeros(5, 3);
        for _ in 0..draws {
            let y = decompress(&compress(&spec, &x, &mut r).unwrap()).unwrap();
            sum_sq += y.component_mul(&y);
            sum += y;
        }
        let n = draws as f64;
        for i in 0..15 {
            let mean = sum[i] / n;
            let var = (sum_sq[i] / n - mean * mean).max(0.0);
            let se = (var / n).sqrt();
            assert!((mean - x[i]).abs() <= sigmas * se + 1e-12, "{spec:?} entry {i}: {mean} vs {}", x[i]);
        }
    }

    #[test]
    fn rand_k_unbiased() {
        mean_within_sigma(CompressorSpec::RandK { k: 4 }, 3.0);
    }

    #[test]
    fn dither_unbiased() {
        mean_within_sigma(CompressorSpec::Dither { levels: 3 }, 3.0);
    }

    #[test]
    fn top_k_contraction_measured() {
        let mut r = rng();
        for _ in 0..50 {
            let x = Matrix::from_fn(8, 3, |_, _| r.random_range(-1.0..1.0));
            let spec = CompressorSpec::TopK { k: 5 };
            let delta = contraction_delta(&spec, 8, 3).unwrap();
            let y = decompress(&compress(&spec, &x, &mut r).unwrap()).unwrap();
            assert!((y - &x).norm_squared() <= (1.0 - delta) * x.norm_squared() + 1e-15);
        }
    }

    proptest! {
        #[test]
        fn top_k_contraction_holds(
            vals in proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), Just(-1.0), -10.0f64..10.0], 12),
            k in 1usize..12,
        ) {
            let x = Matrix::from_column_slice(4, 3, &vals);
            let spec = CompressorSpec::TopK { k };
            let y = decompress(&compress(&spec, &x, &mut rng()).unwrap()).unwrap();
            let delta = contraction_delta(&spec, 4, 3).unwrap();
            prop_assert!((y - &x).norm_squared() <= (1.0 - delta) * x.norm_squared() * (1.0 + 1e-12));
        }
    }
}
