//! Configuration-driven experiment runner behind the `flecs` binary.
//!
//! A run is described by one TOML file whose sections mirror the pieces of
//! the method (`run`, `data`, `objective`, `sketch`, `compressor`,
//! `hessian`, `direction`). Every field has a default, and the defaults are
//! the benchmark setting, so a nearly empty file is a valid
//! run. Outputs land in `$FLECS_OUTPUT_ROOT/<run.name>/`:
//!
//! * `metrics.csv` with the header [`CSV_HEADER`](crate::federation::CSV_HEADER),
//! * `summary.json` with the final loss, iteration count and totals,
//! * `resolved_config.toml` with every default filled in.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compress::CompressorSpec;
use crate::dataset::{census_like, partition_rows, read_libsvm_file, synthetic_quadratic, PartitionMode};
use crate::direction::DirectionRule;
use crate::error::{FlecsError, Result};
use crate::federation::baseline::{run_gd, run_fednl_lite, GdConfig, FednlLiteConfig};
use crate::federation::checkpoint;
use crate::federation::metrics::{read_csv, write_csv, RunMetrics};
use crate::federation::{FlecsConfig, InitialHessian, Simulation};
use crate::hessian::HessianRule;
use crate::objective::{GlobalObjective, ObjectiveKind, DEFAULT_DENSE_CAP};
use crate::sketch::SketchFamily;
use crate::Vector;

/// Environment variable naming the directory that receives run outputs.
pub const OUTPUT_ROOT_VAR: &str = "FLECS_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "flecs-runs";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Maps an error to the process exit code: `1` for anything wrong with the
/// configuration, `2` for failures while loading data or running.
pub fn exit_code(err: &FlecsError) -> i32 {
    match err {
        FlecsError::Config { .. } | FlecsError::TooLarge { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Flecs,
    Gd,
    /// Full-matrix Newton learning baseline.
    FednlLite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub max_iterations: u64,
    pub tol: f64,
    pub parallel: bool,
    pub record_wall_time: bool,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: u64,
    /// Continue from `checkpoint.bin` in the output directory if present.
    pub resume: bool,
    /// Declared wall-clock budget; exceeding it is reported, not fatal.
    pub time_budget_secs: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: "flecs".into(),
            algorithm: Algorithm::Flecs,
            seed: 0,
            max_iterations: 500,
            tol: 1e-12,
            parallel: false,
            record_wall_time: true,
            checkpoint_every: 0,
            resume: false,
            time_budget_secs: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Libsvm,
    /// Seeded stand-in with the shape of the census benchmark (123 one-hot
    /// features).
    #[default]
    CensusLike,
    SyntheticQuadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// LIBSVM file; relative paths are resolved against the config file.
    pub path: Option<PathBuf>,
    pub num_features: Option<usize>,
    /// Row count for `census_like`.
    pub rows: usize,
    pub workers: usize,
    pub partition: PartitionMode,
    /// Dimension and spectrum of `synthetic_quadratic`.
    pub dim: usize,
    pub quad_mu: f64,
    pub quad_l: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::CensusLike,
            path: None,
            num_features: None,
            rows: 32561,
            workers: 10,
            partition: PartitionMode::Contiguous,
            dim: 50,
            quad_mu: 0.1,
            quad_l: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub kind: ObjectiveKind,
    pub mu: f64,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::LogregL2,
            mu: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SketchSection {
    pub m: usize,
    pub family: SketchFamily,
}

impl Default for SketchSection {
    fn default() -> Self {
        Self {
            m: 16,
            family: SketchFamily::Gaussian,
        }
    }
}

/// Kept entries for sparsifying compressors: a count or a multiple of `d`
/// written like `"4d"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntryCount {
    Count(u64),
    PerDim(String),
}

impl EntryCount {
    pub fn resolve(&self, d: usize) -> Result<usize> {
        match self {
            EntryCount::Count(k) => Ok(*k as usize),
            EntryCount::PerDim(s) => {
                let factor = s
                    .trim()
                    .strip_suffix('d')
                    .map(|f| if f.is_empty() { Ok(1.0) } else { f.trim().parse::<f64>() });
                match factor {
                    Some(Ok(f)) if f > 0.0 => Ok((f * d as f64).round() as usize),
                    _ => Err(FlecsError::config("compressor.k", format!("expected an integer or a form like \"4d\", got {s:?}"))),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    Identity,
    #[default]
    TopK,
    RandK,
    Dither,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressorSection {
    pub kind: CompressorKind,
    pub k: EntryCount,
    pub levels: u32,
}

impl Default for CompressorSection {
    fn default() -> Self {
        Self {
            kind: CompressorKind::TopK,
            k: EntryCount::PerDim("4d".into()),
            levels: 128,
        }
    }
}

impl CompressorSection {
    pub fn resolve(&self, d: usize) -> Result<CompressorSpec> {
        let spec = match self.kind {
            CompressorKind::Identity => CompressorSpec::Identity,
            CompressorKind::TopK => CompressorSpec::TopK { k: self.k.resolve(d)? },
            CompressorKind::RandK => CompressorSpec::RandK { k: self.k.resolve(d)? },
            CompressorKind::Dither => CompressorSpec::Dither { levels: self.levels },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianRuleName {
    #[default]
    Lsr1,
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HessianSection {
    pub rule: HessianRuleName,
    pub beta: f64,
    pub init: InitialHessian,
}

impl Default for HessianSection {
    fn default() -> Self {
        Self {
            rule: HessianRuleName::Lsr1,
            beta: 1.0,
            init: InitialHessian::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionRuleName {
    #[default]
    TruncatedInverse,
    Fedsonia,
    Regularized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectionSection {
    pub rule: DirectionRuleName,
    /// FedSONIA scaling outside the subspace; defaults to `1 / big_omega`.
    pub rho: Option<f64>,
    pub omega: f64,
    pub big_omega: f64,
    pub alpha: f64,
    pub dim_cap: usize,
}

impl Default for DirectionSection {
    fn default() -> Self {
        Self {
            rule: DirectionRuleName::TruncatedInverse,
            rho: None,
            omega: 1e-3,
            big_omega: 1e8,
            alpha: 1.0,
            dim_cap: 6000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub objective: ObjectiveSection,
    pub sketch: SketchSection,
    pub compressor: CompressorSection,
    pub hessian: HessianSection,
    pub direction: DirectionSection,
}

fn toml_error(e: impl std::fmt::Display) -> FlecsError {
    FlecsError::config("config", e.to_string().trim().replace('\n', " "))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: toml::Table) -> Result<Self> {
        let cfg: RunConfig = value.try_into().map_err(toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative data paths are rebased onto the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_value(read_table(path)?)?;
        cfg.rebase_paths(path);
        Ok(cfg)
    }

    fn rebase_paths(&mut self, config_path: &Path) {
        if let (Some(p), Some(dir)) = (&self.data.path, config_path.parent()) {
            if p.is_relative() {
                self.data.path = Some(dir.join(p));
            }
        }
    }

    /// Checks everything that does not depend on the loaded data.
    pub fn validate(&self) -> Result<()> {
        let d = &self.direction;
        crate::numerics::check_truncation(d.omega, d.big_omega)?;
        if !(d.alpha > 0.0 && d.alpha.is_finite()) {
            return Err(FlecsError::config("direction.alpha", format!("must be positive, got {}", d.alpha)));
        }
        if let Some(rho) = d.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(FlecsError::config("direction.rho", format!("must be positive, got {rho}")));
            }
        }
        if !(self.hessian.beta > 0.0 && self.hessian.beta <= 1.0) {
            return Err(FlecsError::config("hessian.beta", format!("must lie in (0, 1], got {}", self.hessian.beta)));
        }
        if self.sketch.m == 0 {
            return Err(FlecsError::config("sketch.m", "must be at least 1"));
        }
        if self.data.workers == 0 {
            return Err(FlecsError::config("data.workers", "must be at least 1"));
        }
        if !(self.objective.mu >= 0.0) {
            return Err(FlecsError::config("objective.mu", "must be >= 0"));
        }
        if !(self.run.tol >= 0.0) {
            return Err(FlecsError::config("run.tol", "must be >= 0"));
        }
        match self.data.source {
            DataSource::Libsvm if self.data.path.is_none() => {
                return Err(FlecsError::config("data.path", "required when data.source = \"libsvm\""))
            }
            DataSource::SyntheticQuadratic if !(self.data.quad_mu > 0.0 && self.data.quad_mu <= self.data.quad_l) => {
                return Err(FlecsError::config("data.quad_mu", "need 0 < quad_mu <= quad_l"))
            }
            _ => {}
        }
        if let EntryCount::PerDim(_) = self.compressor.k {
            self.compressor.k.resolve(1)?;
        }
        Ok(())
    }

    fn direction_rule(&self) -> DirectionRule {
        match self.direction.rule {
            DirectionRuleName::TruncatedInverse => DirectionRule::TruncatedInverse,
            DirectionRuleName::Fedsonia => DirectionRule::FedSonia {
                rho: self.direction.rho.unwrap_or(1.0 / self.direction.big_omega),
            },
            DirectionRuleName::Regularized => DirectionRule::Regularized,
        }
    }

    /// Simulator configuration for a problem of dimension `d`.
    pub fn flecs_config(&self, d: usize) -> Result<FlecsConfig> {
        let cfg = FlecsConfig {
            m: self.sketch.m,
            sketch_family: self.sketch.family,
            seed: self.run.seed,
            compressor: self.compressor.resolve(d)?,
            hessian: match self.hessian.rule {
                HessianRuleName::Lsr1 => HessianRule::Lsr1,
                HessianRuleName::Direct => HessianRule::Direct { beta: self.hessian.beta },
            },
            direction: self.direction_rule(),
            omega: self.direction.omega,
            big_omega: self.direction.big_omega,
            alpha: self.direction.alpha,
            max_iterations: self.run.max_iterations,
            tol: self.run.tol,
            init: self.hessian.init,
            parallel: self.run.parallel,
            record_wall_time: self.run.record_wall_time,
            direction_dim_cap: self.direction.dim_cap,
            ..FlecsConfig::default()
        };
        cfg.validate(d)?;
        Ok(cfg)
    }

    /// Copy with data-dependent defaults materialized.
    pub fn resolved(&self, d: usize) -> Result<Self> {
        let mut out = self.clone();
        if matches!(self.compressor.kind, CompressorKind::TopK | CompressorKind::RandK) {
            out.compressor.k = EntryCount::Count(self.compressor.k.resolve(d)? as u64);
        }
        if out.direction.rho.is_none() {
            out.direction.rho = Some(1.0 / self.direction.big_omega);
        }
        if out.data.num_features.is_none() {
            out.data.num_features = Some(d);
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(toml_error)
    }
}

fn read_table(path: &Path) -> Result<toml::Table> {
    if !path.exists() {
        return Err(FlecsError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    text.parse::<toml::Table>().map_err(toml_error)
}

/// Loads the data and builds the global objective for a config.
pub fn load_objective(cfg: &RunConfig) -> Result<GlobalObjective> {
    let data = &cfg.data;
    let dataset = match data.source {
        DataSource::SyntheticQuadratic => {
            let q = synthetic_quadratic(data.dim, data.quad_mu, data.quad_l, data.workers, cfg.run.seed)?;
            return GlobalObjective::from_quadratic(&q);
        }
        DataSource::CensusLike => census_like(data.rows, cfg.run.seed)?,
        DataSource::Libsvm => {
            let path = data.path.as_ref().ok_or_else(|| FlecsError::config("data.path", "missing"))?;
            read_libsvm_file(path, data.num_features)?
        }
    };
    if cfg.objective.kind == ObjectiveKind::Quadratic {
        return Err(FlecsError::config("objective.kind", "quadratic objectives need data.source = \"synthetic_quadratic\""));
    }
    let partition = partition_rows(&dataset, data.workers, data.partition, cfg.run.seed)?;
    GlobalObjective::from_dataset(&dataset, &partition, cfg.objective.kind, cfg.objective.mu)
}

/// Totals reported next to `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub algorithm: Algorithm,
    pub dim: usize,
    pub workers: usize,
    pub iterations: u64,
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    pub converged: bool,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    pub hvps: u64,
    pub elapsed_secs: f64,
    pub within_budget: Option<bool>,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        format!(
            "{} ({:?}, d = {}, n = {}): {} iterations, final loss {:.10e}, ||grad||^2 {:.3e}, uplink {} bits, downlink {} bits, {} HVPs{}",
            self.name,
            self.algorithm,
            self.dim,
            self.workers,
            self.iterations,
            self.final_loss,
            self.final_grad_norm_sq,
            self.uplink_bits,
            self.downlink_bits,
            self.hvps,
            if self.converged { ", converged" } else { "" },
        )
    }
}

/// Result of one run: where it was written and what it produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub metrics: Vec<RunMetrics>,
    pub summary: RunSummary,
}

fn run_flecs(objective: &GlobalObjective, cfg: &RunConfig, dir: &Path) -> Result<Vec<RunMetrics>> {
    let d = objective.dim();
    let flecs = cfg.flecs_config(d)?;
    let ckpt = dir.join("checkpoint.bin");
    let metrics_path = dir.join("metrics.csv");
    let (mut sim, mut rows) = if cfg.run.resume && ckpt.exists() {
        let sim = checkpoint::resume(objective, &ckpt)?;
        if sim.config() != &flecs {
            return Err(FlecsError::config("run.resume", "checkpoint was written with a different configuration"));
        }
        let rows = if metrics_path.exists() {
            let mut rows = read_csv(fs::File::open(&metrics_path)?)?;
            rows.retain(|r| r.iter < sim.state().k);
            rows
        } else {
            Vec::new()
        };
        log::info!("resuming from iteration {}", sim.state().k);
        (sim, rows)
    } else {
        (Simulation::new(objective, flecs, Vector::zeros(d))?, Vec::new())
    };
    while !sim.is_finished() {
        rows.push(sim.step()?.row);
        let every = cfg.run.checkpoint_every;
        if every > 0 && !sim.is_finished() && sim.state().k % every == 0 {
            checkpoint::save(&sim, &ckpt)?;
            write_csv(&rows, fs::File::create(&metrics_path)?)?;
        }
    }
    Ok(rows)
}

/// Executes one configured run, writing its outputs under
/// `root/<run.name>`.
pub fn run_experiment_in(cfg: &RunConfig, root: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let objective = load_objective(cfg)?;
    let d = objective.dim();
    let resolved = cfg.resolved(d)?;
    let dir = root.join(&cfg.run.name);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("resolved_config.toml"), resolved.to_toml()?)?;

    let w0 = Vector::zeros(d);
    let metrics = match cfg.run.algorithm {
        Algorithm::Flecs => run_flecs(&objective, cfg, &dir)?,
        Algorithm::Gd => {
            let gd = GdConfig {
                alpha: cfg.direction.alpha,
                max_iterations: cfg.run.max_iterations,
                tol: cfg.run.tol,
                record_wall_time: cfg.run.record_wall_time,
            };
            run_gd(&objective, &gd, w0)?
        }
        Algorithm::FednlLite => {
            let compressor = cfg.compressor.resolve(d)?;
            let nl = FednlLiteConfig {
                warm_start: cfg.hessian.init.resolve(&compressor) == InitialHessian::LocalHessian,
                compressor,
                beta: cfg.hessian.beta,
                alpha: cfg.direction.alpha,
                max_iterations: cfg.run.max_iterations,
                tol: cfg.run.tol,
                seed: cfg.run.seed,
                record_wall_time: cfg.run.record_wall_time,
                dense_cap: DEFAULT_DENSE_CAP.min(cfg.direction.dim_cap),
            };
            run_fednl_lite(&objective, &nl, w0)?
        }
    };
    write_csv(&metrics, fs::File::create(dir.join("metrics.csv"))?)?;

    let last = metrics.last().ok_or_else(|| FlecsError::config("run", "produced no iterations"))?;
    let elapsed = start.elapsed().as_secs_f64();
    let within_budget = cfg.run.time_budget_secs.map(|b| elapsed <= b);
    if within_budget == Some(false) {
        log::warn!("run {} took {elapsed:.1}s, over its budget of {:?}s", cfg.run.name, cfg.run.time_budget_secs);
    }
    let summary = RunSummary {
        name: cfg.run.name.clone(),
        algorithm: cfg.run.algorithm,
        dim: d,
        workers: objective.num_workers(),
        iterations: last.iter,
        final_loss: last.loss,
        final_grad_norm_sq: last.grad_norm_sq,
        converged: last.grad_norm_sq <= cfg.run.tol,
        uplink_bits: last.uplink_bits_cum,
        downlink_bits: last.downlink_bits_cum,
        hvps: last.hvp_cum,
        elapsed_secs: if cfg.run.record_wall_time { elapsed } else { 0.0 },
        within_budget,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| FlecsError::config("summary", e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(RunOutput { dir, metrics, summary })
}

/// Runs a config file with outputs under [`output_root`].
pub fn run_experiment(path: &Path) -> Result<RunOutput> {
    run_experiment_in(&RunConfig::load(path)?, &output_root())
}

/// A `key=v1,v2,...` sweep specification with a dotted key path.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepParam {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for SweepParam {
    type Err = FlecsError;

    fn from_str(s: &str) -> Result<Self> {
        let (key, vals) = s
            .split_once('=')
            .ok_or_else(|| FlecsError::config("--param", format!("expected key=v1,v2,..., got {s:?}")))?;
        let key = key.trim();
        let values: Vec<String> = vals.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if key.is_empty() || key.split('.').any(str::is_empty) || values.is_empty() {
            return Err(FlecsError::config("--param", format!("expected key=v1,v2,..., got {s:?}")));
        }
        Ok(Self { key: key.to_string(), values })
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(i) = raw.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = raw.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(raw.to_string())
    }
}

/// Sets `a.b.c = value`, creating intermediate tables.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().ok_or_else(|| FlecsError::config("--param", "empty key"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| FlecsError::config(key, format!("{p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// One run per value of `param`, each named `<run.name>_<key>=<value>`.
pub fn sweep_in(path: &Path, param: &SweepParam, root: &Path) -> Result<Vec<RunOutput>> {
    let base = read_table(path)?;
    let base_cfg = RunConfig::from_value(base.clone())?;
    let configs = param
        .values
        .iter()
        .map(|v| {
            let mut table = base.clone();
            set_dotted(&mut table, &param.key, parse_scalar(v))?;
            let name = format!("{}_{}={}", base_cfg.run.name, param.key, v);
            set_dotted(&mut table, "run.name", toml::Value::String(name))?;
            let mut cfg = RunConfig::from_value(table)?;
            cfg.rebase_paths(path);
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    configs.iter().map(|cfg| run_experiment_in(cfg, root)).collect()
}

pub fn sweep(path: &Path, param: &SweepParam) -> Result<Vec<RunOutput>> {
    sweep_in(path, param, &output_root())
}

const METRIC_COLUMNS: [&str; 6] = ["loss", "grad_norm_sq", "uplink_bits_cum", "downlink_bits_cum", "hvp_cum", "wall_ms"];

fn series_label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "metrics" {
        if let Some(parent) = path.parent().and_then(|p| p.file_name()) {
            return parent.to_string_lossy().into_owned();
        }
    }
    stem
}

fn metric_cell(r: &RunMetrics, col: usize) -> String {
    match col {
        0 => format!("{:e}", r.loss),
        1 => format!("{:e}", r.grad_norm_sq),
        2 => r.uplink_bits_cum.to_string(),
        3 => r.downlink_bits_cum.to_string(),
        4 => r.hvp_cum.to_string(),
        _ => format!("{:.3}", r.wall_ms),
    }
}

/// Outer-joins metrics files on `iter`. Each run contributes one column per
/// metric, named `<label>.<metric>`, so curves can be plotted against any of
/// the cumulative cost axes. Missing iterations are left empty.
pub fn compare<W: std::io::Write>(paths: &[PathBuf], out: W) -> Result<usize> {
    if paths.is_empty() {
        return Err(FlecsError::config("compare", "need at least one CSV"));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut series = Vec::new();
    for p in paths {
        if !p.exists() {
            return Err(FlecsError::MissingFile(p.clone()));
        }
        let mut label = series_label(p);
        if labels.contains(&label) {
            label = format!("{label}#{}", labels.len());
        }
        labels.push(label);
        let rows = read_csv(fs::File::open(p)?)?;
        series.push(rows.into_iter().map(|r| (r.iter, r)).collect::<BTreeMap<_, _>>());
    }
    let iters: std::collections::BTreeSet<u64> = series.iter().flat_map(|s| s.keys().copied()).collect();
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["iter".to_string()];
    for l in &labels {
        header.extend(METRIC_COLUMNS.iter().map(|c| format!("{l}.{c}")));
    }
    writer.write_record(&header)?;
    for it in &iters {
        let mut record = vec![it.to_string()];
        for s in &series {
            match s.get(it) {
                Some(r) => record.extend((0..METRIC_COLUMNS.len()).map(|c| metric_cell(r, c))),
                None => record.extend(std::iter::repeat_n(String::new(), METRIC_COLUMNS.len())),
            }
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(iters.len())
}
