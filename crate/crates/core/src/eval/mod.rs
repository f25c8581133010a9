//! Bootstrapped training-sample evaluation.
//!
//! Each replicate draws `n_ta` training users with replacement, z-scores
//! features on that sample, trains a linear model from zero, and scores it
//! on the full test set.

mod ci;
mod metrics;

pub use ci::{confidence_interval, sample_sd, summarize, t_multiplier, CiMethod, Summary};
pub use metrics::{disattenuated_r, macro_f1, pearson_r, Metric};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{OutcomeKind, TaskDataset};
use crate::error::{Error, Result};
use crate::linmod::{self, ModelKind, TrainConfig};
use crate::seed;

pub const DEFAULT_REPLICATES: usize = 10;
pub const DEFAULT_RELIABILITY_X: f64 = 0.70;
pub const DEFAULT_RELIABILITY_Y: f64 = 0.77;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub replicates: usize,
    pub ci: CiMethod,
    pub model: TrainConfig,
    /// Report disattenuated correlations for continuous outcomes.
    pub disattenuate: bool,
    pub reliability_x: f64,
    pub reliability_y: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            replicates: DEFAULT_REPLICATES,
            ci: CiMethod::T,
            model: TrainConfig::default(),
            disattenuate: false,
            reliability_x: DEFAULT_RELIABILITY_X,
            reliability_y: DEFAULT_RELIABILITY_Y,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Config(format!("need at least 2 replicates, got {}", self.replicates)));
        }
        self.model.validate()?;
        if self.disattenuate {
            disattenuated_r(0.0, self.reliability_x, self.reliability_y)?;
        }
        Ok(())
    }

    pub fn metric(&self, kind: OutcomeKind) -> Metric {
        match kind {
            OutcomeKind::Continuous if self.disattenuate => {
                Metric::DisattenuatedR { r_xx: self.reliability_x, r_yy: self.reliability_y }
            }
            OutcomeKind::Continuous => Metric::PearsonR,
            OutcomeKind::Binary => Metric::MacroF1 { n_classes: 2 },
            OutcomeKind::Multiclass4 => Metric::MacroF1 { n_classes: 4 },
        }
    }
}

/// Dense copy of a task's aligned splits.
#[derive(Debug, Clone)]
pub struct EvalData {
    pub task_name: String,
    pub kind: OutcomeKind,
    pub train_x: DMatrix<f64>,
    pub train_y: Vec<f64>,
    pub test_x: DMatrix<f64>,
    pub test_y: Vec<f64>,
}

impl EvalData {
    pub fn from_dataset(data: &TaskDataset) -> Self {
        EvalData {
            task_name: data.task_name.clone(),
            kind: data.kind(),
            train_x: data.train_features.to_matrix(),
            train_y: data.train_targets(),
            test_x: data.test_features.to_matrix(),
            test_y: data.test_targets(),
        }
    }

    pub fn dims(&self) -> usize {
        self.train_x.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub task_name: String,
    pub method: String,
    pub k: usize,
    pub n_ta: usize,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub metric: Metric,
    pub ci_method: CiMethod,
    pub model: TrainConfig,
    pub model_kind: ModelKind,
}

impl BootstrapResult {
    /// Recompute the summary from `scores`.
    pub fn resummarize(&self) -> Result<Summary> {
        summarize(&self.scores, self.ci_method)
    }
}

/// Column means and standard deviations of `x`; a zero deviation becomes 1.
fn standardizer(x: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = x.nrows() as f64;
    let mean = crate::linalg::column_means(x);
    let sd = DVector::from_iterator(
        x.ncols(),
        x.column_iter().enumerate().map(|(j, c)| {
            let v = c.iter().map(|a| (a - mean[j]).powi(2)).sum::<f64>() / n;
            if v > 0.0 { v.sqrt() } else { 1.0 }
        }),
    );
    (mean, sd)
}

fn apply_standardizer(x: &DMatrix<f64>, mean: &DVector<f64>, sd: &DVector<f64>) -> DMatrix<f64> {
    let mut out = crate::linalg::center(x, mean);
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col /= sd[j];
    }
    out
}

fn draw(n_train: usize, n_ta: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    (0..n_ta).map(|_| rng.random_range(0..n_train)).collect()
}

fn single_class(y: &[f64], idx: &[usize]) -> bool {
    idx.iter().all(|&i| y[i] == y[idx[0]])
}

/// Training rows for one replicate. A classification sample holding a single
/// class is redrawn once from a shifted stream.
fn replicate_rows(y: &[f64], n_ta: usize, seed: u64, classify: bool) -> Result<Vec<usize>, String> {
    let rows = draw(y.len(), n_ta, seed);
    if !classify || !single_class(y, &rows) {
        return Ok(rows);
    }
    let rows = draw(y.len(), n_ta, seed::derive(seed, b"resample"));
    if single_class(y, &rows) {
        return Err(format!("all {n_ta} sampled users share one class"));
    }
    Ok(rows)
}

/// Train on the given training rows and score on the full test set.
pub fn fit_and_score(data: &EvalData, rows: &[usize], cfg: &EvalConfig) -> Result<f64> {
    let x = data.train_x.select_rows(rows);
    let y: Vec<f64> = rows.iter().map(|&i| data.train_y[i]).collect();
    let (mean, sd) = standardizer(&x);
    let model = linmod::train(
        &apply_standardizer(&x, &mean, &sd),
        &y,
        ModelKind::for_outcome(data.kind),
        &cfg.model,
    )?;
    let pred = model.predict(&apply_standardizer(&data.test_x, &mean, &sd))?;
    cfg.metric(data.kind).score(&data.test_y, &pred)
}

/// Evaluate one (task, reduction, `n_ta`) cell over `cfg.replicates`
/// bootstrap samples. Replicate `i` (1-based) samples with the stream
/// `derive_index(seed, i)`, so results do not depend on scheduling.
pub fn bootstrap_matrices(
    data: &EvalData,
    method: &str,
    n_ta: usize,
    seed: u64,
    cfg: &EvalConfig,
) -> Result<BootstrapResult> {
    cfg.validate()?;
    if n_ta == 0 {
        return Err(Error::Config("n_ta must be at least 1".into()));
    }
    let n_train = data.train_x.nrows();
    if n_train == 0 || data.test_x.nrows() == 0 {
        return Err(Error::data(format!("task {} has an empty split", data.task_name)));
    }
    if data.test_x.ncols() != data.dims() {
        return Err(Error::shape(format!("{} test features", data.dims()), data.test_x.ncols()));
    }
    let classify = data.kind != OutcomeKind::Continuous;

    let scores = (1..=cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let rows = replicate_rows(&data.train_y, n_ta, seed::derive_index(seed, i as u64), classify)
                .map_err(|message| Error::DegenerateSample { replicate: i, message })?;
            fit_and_score(data, &rows, cfg)
        })
        .collect::<Result<Vec<f64>>>()?;

    let s = summarize(&scores, cfg.ci)?;
    Ok(BootstrapResult {
        task_name: data.task_name.clone(),
        method: method.to_string(),
        k: data.dims(),
        n_ta,
        scores,
        mean: s.mean,
        std_error: s.std_error,
        ci_low: s.ci_low,
        ci_high: s.ci_high,
        seed,
        metric: cfg.metric(data.kind),
        ci_method: cfg.ci,
        model: cfg.model,
        model_kind: ModelKind::for_outcome(data.kind),
    })
}

/// [`bootstrap_matrices`] on an already reduced dataset.
pub fn bootstrap_eval(
    data: &TaskDataset,
    method: &str,
    n_ta: usize,
    seed: u64,
    cfg: &EvalConfig,
) -> Result<BootstrapResult> {
    bootstrap_matrices(&EvalData::from_dataset(data), method, n_ta, seed, cfg)
}
