//! Local objectives and their first- and second-order oracles.
//!
//! Logistic losses are averaged over the worker's rows:
//! `(1/r) sum_j log(1 + exp(-b_j a_j^T w)) + reg(w)` with either the ridge
//! penalty `mu ||w||^2` or the bounded nonconvex penalty
//! `mu sum_t w_t^2 / (1 + w_t^2)`.

use serde::{Deserialize, Serialize};

use crate::dataset::{Partition, QuadraticProblem, SparseDataset, SparseRow};
use crate::error::{FlecsError, Result};
use crate::{Matrix, Vector};

/// Largest dimension for which a dense `d x d` Hessian is materialized
/// unless the caller overrides it.
pub const DEFAULT_DENSE_CAP: usize = 25_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    LogregL2,
    LogregNonconvex,
    Quadratic,
}

#[derive(Clone, Debug)]
enum LocalData {
    Rows(Vec<SparseRow>),
    Quadratic { hessian: Matrix, linear: Vector },
}

/// Count of Hessian-vector products performed by one worker.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct HvpCounter(pub u64);

impl HvpCounter {
    pub fn add(&mut self, n: usize) {
        self.0 += n as u64;
    }
}

#[derive(Clone, Debug)]
pub struct LocalObjective {
    kind: ObjectiveKind,
    dim: usize,
    reg_mu: f64,
    data: LocalData,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_point(w: &Vector, d: usize) -> Result<()> {
    if w.len() != d {
        return Err(FlecsError::Dimension(format!("point has length {}, expected {d}", w.len())));
    }
    if !w.iter().all(|x| x.is_finite()) {
        return Err(FlecsError::NonFinite("iterate"));
    }
    Ok(())
}

impl LocalObjective {
    pub fn logistic(rows: Vec<SparseRow>, dim: usize, reg_mu: f64, nonconvex: bool) -> Result<Self> {
        if !(reg_mu >= 0.0 && reg_mu.is_finite()) {
            return Err(FlecsError::config("objective.mu", format!("must be >= 0, got {reg_mu}")));
        }
        if let Some(bad) = rows.iter().find(|r| r.indices.last().is_some_and(|&j| j as usize >= dim)) {
            return Err(FlecsError::Dimension(format!(
                "row index {:?} outside dimension {dim}",
                bad.indices.last()
            )));
        }
        Ok(Self {
            kind: if nonconvex {
                ObjectiveKind::LogregNonconvex
            } else {
                ObjectiveKind::LogregL2
            },
            dim,
            reg_mu,
            data: LocalData::Rows(rows),
        })
    }

    pub fn quadratic(hessian: Matrix, linear: Vector) -> Result<Self> {
        let d = linear.len();
        if hessian.shape() != (d, d) {
            return Err(FlecsError::Dimension(format!(
                "quadratic Hessian {:?} vs linear term {d}",
                hessian.shape()
            )));
        }
        Ok(Self {
            kind: ObjectiveKind::Quadratic,
            dim: d,
            reg_mu: 0.0,
            data: LocalData::Quadratic { hessian, linear },
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reg_mu(&self) -> f64 {
        self.reg_mu
    }

    pub fn num_rows(&self) -> usize {
        match &self.data {
            LocalData::Rows(r) => r.len(),
            LocalData::Quadratic { .. } => 0,
        }
    }

    fn reg_value(&self, w: &Vector) -> f64 {
        let mu = self.reg_mu;
        match self.kind {
            ObjectiveKind::LogregL2 => mu * w.norm_squared(),
            ObjectiveKind::LogregNonconvex => mu * w.iter().map(|x| x * x / (1.0 + x * x)).sum::<f64>(),
            ObjectiveKind::Quadratic => 0.0,
        }
    }

    fn reg_gradient(&self, w: &Vector) -> Vector {
        let mu = self.reg_mu;
        match self.kind {
            ObjectiveKind::LogregL2 => w * (2.0 * mu),
            ObjectiveKind::LogregNonconvex => w.map(|x| 2.0 * mu * x / (1.0 + x * x).powi(2)),
            ObjectiveKind::Quadratic => Vector::zeros(self.dim),
        }
    }

    /// Diagonal of the regularizer Hessian.
    fn reg_hessian_diag(&self, w: &Vector) -> Vector {
        let mu = self.reg_mu;
        match self.kind {
            ObjectiveKind::LogregL2 => Vector::from_element(self.dim, 2.0 * mu),
            ObjectiveKind::LogregNonconvex => w.map(|x| {
                let s = x * x;
                2.0 * mu * (1.0 - 3.0 * s) / (1.0 + s).powi(3)
            }),
            ObjectiveKind::Quadratic => Vector::zeros(self.dim),
        }
    }

    pub fn value(&self, w: &Vector) -> Result<f64> {
        check_point(w, self.dim)?;
        Ok(match &self.data {
            LocalData::Quadratic { hessian, linear } => 0.5 * w.dot(&(hessian * w)) - linear.dot(w),
            LocalData::Rows(rows) => {
                let ws = w.as_slice();
                let loss: f64 = rows.iter().map(|r| softplus(-r.label * r.dot(ws))).sum();
                let mean = if rows.is_empty() { 0.0 } else { loss / rows.len() as f64 };
                mean + self.reg_value(w)
            }
        })
    }

    pub fn gradient(&self, w: &Vector) -> Result<Vector> {
        check_point(w, self.dim)?;
        Ok(match &self.data {
            LocalData::Quadratic { hessian, linear } => hessian * w - linear,
            LocalData::Rows(rows) => {
                let ws = w.as_slice();
                let mut g = self.reg_gradient(w);
                if !rows.is_empty() {
                    let scale = 1.0 / rows.len() as f64;
                    for r in rows {
                        let coef = -r.label * sigmoid(-r.label * r.dot(ws)) * scale;
                        for (&j, &v) in r.indices.iter().zip(&r.values) {
                            g[j as usize] += coef * v;
                        }
                    }
                }
                g
            }
        })
    }

    /// `Y = Hess f(w) S`, computed column by column as Hessian-vector products.
    /// Adds `S.ncols()` to `hvps`.
    pub fn hessian_sketch(&self, w: &Vector, s: &Matrix, hvps: &mut HvpCounter) -> Result<Matrix> {
        check_point(w, self.dim)?;
        if s.nrows() != self.dim {
            return Err(FlecsError::Dimension(format!(
                "sketch has {} rows, objective dimension is {}",
                s.nrows(),
                self.dim
            )));
        }
        if s.ncols() > self.dim {
            return Err(FlecsError::Dimension(format!(
                "sketch has {} columns, more than dimension {}",
                s.ncols(),
                self.dim
            )));
        }
        let m = s.ncols();
        let y = match &self.data {
            LocalData::Quadratic { hessian, .. } => hessian * s,
            LocalData::Rows(rows) => {
                let reg = self.reg_hessian_diag(w);
                let mut y = Matrix::from_fn(self.dim, m, |r, c| reg[r] * s[(r, c)]);
                if !rows.is_empty() {
                    let ws = w.as_slice();
                    let scale = 1.0 / rows.len() as f64;
                    let mut proj = vec![0.0; m];
                    for r in rows {
                        let z = r.dot(ws);
                        let curv = sigmoid(z) * sigmoid(-z) * scale;
                        if curv == 0.0 {
                            continue;
                        }
                        for (t, p) in proj.iter_mut().enumerate() {
                            let col = s.column(t);
                            *p = curv
                                * r.indices
                                    .iter()
                                    .zip(&r.values)
                                    .map(|(&j, &v)| v * col[j as usize])
                                    .sum::<f64>();
                        }
                        for (t, &p) in proj.iter().enumerate() {
                            let mut col = y.column_mut(t);
                            for (&j, &v) in r.indices.iter().zip(&r.values) {
                                col[j as usize] += p * v;
                            }
                        }
                    }
                }
                y
            }
        };
        hvps.add(m);
        Ok(y)
    }

    /// Exact dense local Hessian. Refuses dimensions above `cap`.
    pub fn hessian_dense(&self, w: &Vector, cap: usize) -> Result<Matrix> {
        check_point(w, self.dim)?;
        if self.dim > cap {
            return Err(FlecsError::TooLarge {
                what: "dense Hessian dimension",
                size: self.dim,
                cap,
                advice: "use the Hessian-sketch path instead",
            });
        }
        Ok(match &self.data {
            LocalData::Quadratic { hessian, .. } => hessian.clone(),
            LocalData::Rows(rows) => {
                let mut h = Matrix::from_diagonal(&self.reg_hessian_diag(w));
                if !rows.is_empty() {
                    let ws = w.as_slice();
                    let scale = 1.0 / rows.len() as f64;
                    for r in rows {
                        let z = r.dot(ws);
                        let curv = sigmoid(z) * sigmoid(-z) * scale;
                        for (&a, &va) in r.indices.iter().zip(&r.values) {
                            for (&b, &vb) in r.indices.iter().zip(&r.values) {
                                h[(a as usize, b as usize)] += curv * va * vb;
                            }
                        }
                    }
                }
                h
            }
        })
    }
}

/// `F(w) = (1/n) sum_i f_i(w)`.
#[derive(Clone, Debug)]
pub struct GlobalObjective {
    locals: Vec<LocalObjective>,
    dim: usize,
}

impl GlobalObjective {
    pub fn new(locals: Vec<LocalObjective>) -> Result<Self> {
        let first = locals
            .first()
            .ok_or_else(|| FlecsError::config("data.workers", "need at least one worker"))?;
        let (kind, dim, mu) = (first.kind, first.dim, first.reg_mu);
        if locals.iter().any(|f| f.kind != kind || f.dim != dim || f.reg_mu != mu) {
            return Err(FlecsError::Dimension(
                "local objectives disagree on kind, dimension or regularization".into(),
            ));
        }
        Ok(Self { locals, dim })
    }

    pub fn from_dataset(ds: &SparseDataset, partition: &Partition, kind: ObjectiveKind, reg_mu: f64) -> Result<Self> {
        let nonconvex = match kind {
            ObjectiveKind::LogregL2 => false,
            ObjectiveKind::LogregNonconvex => true,
            ObjectiveKind::Quadratic => {
                return Err(FlecsError::config(
                    "objective.kind",
                    "quadratic objectives come from the synthetic generator, not a dataset",
                ))
            }
        };
        let locals = partition
            .assignments
            .iter()
            .map(|rows| LocalObjective::logistic(ds.subset(rows), ds.num_features(), reg_mu, nonconvex))
            .collect::<Result<Vec<_>>>()?;
        Self::new(locals)
    }

    pub fn from_quadratic(problem: &QuadraticProblem) -> Result<Self> {
        let locals = problem
            .hessians
            .iter()
            .zip(&problem.linear_terms)
            .map(|(h, b)| LocalObjective::quadratic(h.clone(), b.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(locals)
    }

    pub fn locals(&self) -> &[LocalObjective] {
        &self.locals
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_workers(&self) -> usize {
        self.locals.len()
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.locals[0].kind
    }

    pub fn value(&self, w: &Vector) -> Result<f64> {
        let mut total = 0.0;
        for f in &self.locals {
            total += f.value(w)?;
        }
        Ok(total / self.locals.len() as f64)
    }

    pub fn gradient(&self, w: &Vector) -> Result<Vector> {
        let mut g = Vector::zeros(self.dim);
        for f in &self.locals {
            g += f.gradient(w)?;
        }
        Ok(g / self.locals.len() as f64)
    }

    pub fn hessian_dense(&self, w: &Vector, cap: usize) -> Result<Matrix> {
        let mut h = Matrix::zeros(self.dim, self.dim);
        for f in &self.locals {
            h += f.hessian_dense(w, cap)?;
        }
        Ok(h / self.locals.len() as f64)
    }

    /// Hessian-vector product of the global objective.
    pub fn hvp(&self, w: &Vector, v: &Vector) -> Result<Vector> {
        let s = Matrix::from_column_slice(self.dim, 1, v.as_slice());
        let mut sink = HvpCounter::default();
        let mut out = Vector::zeros(self.dim);
        for f in &self.locals {
            out += f.hessian_sketch(w, &s, &mut sink)?.column(0);
        }
        Ok(out / self.locals.len() as f64)
    }
}
