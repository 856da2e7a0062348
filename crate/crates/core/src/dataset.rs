//! Dataset ingestion and partitioning.
//!
//! Rows are kept in a compressed sparse layout. Labels are always `-1.0` or
//! `+1.0`; files that use `0/1` coding are mapped by sign on the way in.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FlecsError, Result};
use crate::rng::{self, Stream, SHARED_NODE};
use crate::{Matrix, Vector};

/// One labelled sparse row. `indices` are 0-based, strictly ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow {
    pub label: f64,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&j, &v)| v * w[j as usize])
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseDataset {
    rows: Vec<SparseRow>,
    num_features: usize,
}

impl SparseDataset {
    /// Builds a dataset, checking that every index is in range and unique and
    /// every label is `+-1`.
    pub fn new(rows: Vec<SparseRow>, num_features: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(FlecsError::EmptyDataset);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.label != 1.0 && row.label != -1.0 {
                return Err(FlecsError::Dimension(format!("row {i} has label {}", row.label)));
            }
            if row.indices.len() != row.values.len() {
                return Err(FlecsError::Dimension(format!("row {i} has ragged index/value lists")));
            }
            if row.indices.windows(2).any(|p| p[0] >= p[1]) {
                return Err(FlecsError::Dimension(format!("row {i} indices not strictly ascending")));
            }
            if let Some(&last) = row.indices.last() {
                if last as usize >= num_features {
                    return Err(FlecsError::Dimension(format!(
                        "row {i} index {last} outside [0, {num_features})"
                    )));
                }
            }
        }
        Ok(Self { rows, num_features })
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// First `n` rows, keeping the feature dimension.
    pub fn head(&self, n: usize) -> Result<Self> {
        Self::new(self.rows[..n.min(self.rows.len())].to_vec(), self.num_features)
    }

    pub fn subset(&self, rows: &[usize]) -> Vec<SparseRow> {
        rows.iter().map(|&r| self.rows[r].clone()).collect()
    }

    /// Serializes back to LIBSVM text with 1-based indices.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(if row.label > 0.0 { "+1" } else { "-1" });
            for (&j, &v) in row.indices.iter().zip(&row.values) {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses LIBSVM text. Gzip input is detected from its magic bytes.
///
/// `d_hint` raises the feature dimension above the largest observed index
/// when the sample does not contain every feature.
pub fn parse_libsvm<R: Read>(mut input: R, d_hint: Option<usize>) -> Result<SparseDataset> {
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut inflated = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut inflated)?;
        raw = inflated;
    }
    let text = String::from_utf8(raw).map_err(|e| FlecsError::Parse {
        line: 0,
        msg: format!("input is not UTF-8: {e}"),
    })?;

    let mut rows = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = parse_line(line, lineno + 1)?;
        if let Some(&last) = row.indices.last() {
            max_index = max_index.max(last as usize + 1);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(FlecsError::EmptyDataset);
    }
    let d = d_hint.map_or(max_index, |h| h.max(max_index));
    SparseDataset::new(rows, d)
}

pub fn read_libsvm_file(path: &Path, d_hint: Option<usize>) -> Result<SparseDataset> {
    if !path.exists() {
        return Err(FlecsError::MissingFile(path.to_path_buf()));
    }
    parse_libsvm(std::fs::File::open(path)?, d_hint)
}

fn parse_line(line: &str, lineno: usize) -> Result<SparseRow> {
    let err = |msg: String| FlecsError::Parse { line: lineno, msg };
    let mut tokens = line.split_whitespace();
    let label_tok = tokens.next().ok_or_else(|| err("missing label".into()))?;
    let raw_label: f64 = label_tok
        .parse()
        .map_err(|_| err(format!("bad label {label_tok:?}")))?;
    if !raw_label.is_finite() {
        return Err(err(format!("non-finite label {label_tok:?}")));
    }
    let label = if raw_label > 0.0 { 1.0 } else { -1.0 };

    let mut pairs = Vec::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| err(format!("expected idx:val, found {tok:?}")))?;
        let idx: u32 = idx.parse().map_err(|_| err(format!("bad index in {tok:?}")))?;
        if idx == 0 {
            return Err(err(format!("indices are 1-based, found {tok:?}")));
        }
        let val: f64 = val.parse().map_err(|_| err(format!("bad value in {tok:?}")))?;
        if !val.is_finite() {
            return Err(err(format!("non-finite value in {tok:?}")));
        }
        pairs.push((idx - 1, val));
    }
    pairs.sort_by_key(|p| p.0);
    if let Some(p) = pairs.windows(2).find(|p| p[0].0 == p[1].0) {
        return Err(err(format!("duplicate index {}", p[0].0 + 1)));
    }
    let (indices, values) = pairs.into_iter().unzip();
    Ok(SparseRow {
        label,
        indices,
        values,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// Consecutive equal-size blocks, remainder to the earliest workers.
    #[default]
    Contiguous,
    /// Sort by label (negatives first) then split contiguously.
    SortedByLabel,
    /// Seeded permutation then contiguous split.
    Shuffled,
}

/// Disjoint assignment of row indices to workers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_workers(&self) -> usize {
        self.assignments.len()
    }
}

pub fn partition_rows(ds: &SparseDataset, n: usize, mode: PartitionMode, seed: u64) -> Result<Partition> {
    let rows = ds.num_rows();
    if n == 0 {
        return Err(FlecsError::config("data.workers", "need at least one worker"));
    }
    if n > rows {
        return Err(FlecsError::config(
            "data.workers",
            format!("{n} workers but only {rows} rows"),
        ));
    }
    let mut order: Vec<usize> = (0..rows).collect();
    match mode {
        PartitionMode::Contiguous => {}
        PartitionMode::SortedByLabel => {
            order.sort_by(|&a, &b| ds.rows[a].label.total_cmp(&ds.rows[b].label));
        }
        PartitionMode::Shuffled => {
            order.shuffle(&mut rng::keyed(seed, 0, SHARED_NODE, Stream::Partition));
        }
    }
    let base = rows / n;
    let extra = rows % n;
    let mut assignments = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let len = base + usize::from(i < extra);
        assignments.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(Partition { assignments })
}

/// Local quadratics `f_i(w) = 1/2 w^T H_i w - b_i^T w` whose average Hessian
/// has spectrum exactly spanning `[mu, l]`.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    pub hessians: Vec<Matrix>,
    pub linear_terms: Vec<Vector>,
    /// Average Hessian `(1/n) sum H_i`.
    pub hessian: Matrix,
    pub minimizer: Vector,
    pub mu: f64,
    pub l: f64,
}

pub fn synthetic_quadratic(d: usize, mu: f64, l: f64, n: usize, seed: u64) -> Result<QuadraticProblem> {
    if !(mu > 0.0 && l > 0.0) {
        return Err(FlecsError::config("synthetic.mu", "mu and L must be positive"));
    }
    if mu > l {
        return Err(FlecsError::config("synthetic.mu", format!("mu={mu} exceeds L={l}")));
    }
    if d == 0 || n == 0 {
        return Err(FlecsError::config("synthetic.d", "d and n must be positive"));
    }
    if d == 1 && mu < l {
        return Err(FlecsError::config("synthetic.d", "d=1 cannot attain both mu and L"));
    }
    let mut rng = rng::keyed(seed, 0, SHARED_NODE, Stream::Synthetic);

    let gauss = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = gauss.qr();
    let mut basis = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            basis.column_mut(j).neg_mut();
        }
    }

    let mut eigenvalues: Vec<f64> = (0..d).map(|_| rng.random_range(mu..=l)).collect();
    eigenvalues[0] = mu;
    eigenvalues[d - 1] = l;

    // Per-worker weights with mean exactly one across workers, so the average
    // of the local spectra is the target spectrum.
    let mut weights = vec![vec![1.0; d]; n];
    if n > 1 {
        for j in 0..d {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.25..1.75)).collect();
            let mean = raw.iter().sum::<f64>() / n as f64;
            for (wi, r) in weights.iter_mut().zip(&raw) {
                wi[j] = r / mean;
            }
        }
    }

    let hessians: Vec<Matrix> = weights
        .iter()
        .map(|wi| {
            let scaled = Matrix::from_fn(d, d, |r, c| basis[(r, c)] * eigenvalues[c] * wi[c]);
            let h = &scaled * basis.transpose();
            (&h + h.transpose()) * 0.5
        })
        .collect();
    let linear_terms: Vec<Vector> = (0..n)
        .map(|_| Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)))
        .collect();

    let hessian = hessians.iter().fold(Matrix::zeros(d, d), |acc, h| acc + h) / n as f64;
    let b_mean = linear_terms.iter().fold(Vector::zeros(d), |acc, b| acc + b) / n as f64;
    let minimizer = hessian
        .clone()
        .cholesky()
        .ok_or_else(|| FlecsError::Dimension("average Hessian not positive definite".into()))?
        .solve(&b_mean);

    Ok(QuadraticProblem {
        hessians,
        linear_terms,
        hessian,
        minimizer,
        mu,
        l,
    })
}

/// Category counts of the one-hot groups in the 123-feature census layout.
pub const CENSUS_GROUPS: [usize; 14] = [5, 8, 5, 16, 5, 7, 14, 6, 5, 2, 2, 2, 5, 41];

/// Generates a binary classification set with the census one-hot layout:
/// 123 binary features in 14 groups, one active category per group, skewed
/// category frequencies, and noisy logistic labels with roughly a quarter
/// positives.
///
/// Stands in for the census-income LIBSVM file when that file is not
/// available; any real file can be loaded with [`read_libsvm_file`] instead.
pub fn census_like(rows: usize, seed: u64) -> Result<SparseDataset> {
    if rows == 0 {
        return Err(FlecsError::EmptyDataset);
    }
    let mut rng = rng::keyed(seed, 1, SHARED_NODE, Stream::Synthetic);
    let d: usize = CENSUS_GROUPS.iter().sum();

    let mut offsets = Vec::with_capacity(CENSUS_GROUPS.len());
    let mut cumulative = Vec::with_capacity(CENSUS_GROUPS.len());
    let mut offset = 0;
    for &size in &CENSUS_GROUPS {
        offsets.push(offset);
        offset += size;
        // Geometric category frequencies in a random order.
        let decay: f64 = rng.random_range(0.35..0.8);
        let mut probs: Vec<f64> = (0..size).map(|c| decay.powi(c as i32)).collect();
        probs.shuffle(&mut rng);
        let total: f64 = probs.iter().sum();
        let mut acc = 0.0;
        cumulative.push(
            probs
                .iter()
                .map(|p| {
                    acc += p / total;
                    acc
                })
                .collect::<Vec<f64>>(),
        );
    }
    let theta: Vec<f64> = (0..d)
        .map(|_| 1.2 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let intercept = -1.4;
    // workclass, occupation and native-country are sometimes missing.
    let missable = [1usize, 6, 13];

    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut indices = Vec::with_capacity(CENSUS_GROUPS.len());
        for (g, cdf) in cumulative.iter().enumerate() {
            if missable.contains(&g) && rng.random::<f64>() < 0.02 {
                continue;
            }
            let u: f64 = rng.random();
            let c = cdf.iter().position(|&p| u <= p).unwrap_or(cdf.len() - 1);
            indices.push((offsets[g] + c) as u32);
        }
        let margin: f64 = intercept + indices.iter().map(|&j| theta[j as usize]).sum::<f64>();
        let p = 1.0 / (1.0 + (-margin).exp());
        let label = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
        let values = vec![1.0; indices.len()];
        out.push(SparseRow {
            label,
            indices,
            values,
        });
    }
    SparseDataset::new(out, d)
}
