//! L2-penalized linear and logistic regression trained by full-batch
//! gradient descent from a zero start.
//!
//! Each head minimizes
//!
//! ```text
//! J(theta) = (1/n) * [ sum_i loss(x_i . w + b, y_i) + (lambda / 2) * ||w||^2 ]
//! ```
//!
//! with `loss = (s - y)^2 / 2` for ridge and the logistic log-loss for
//! classification. The intercept `b` is not penalized. The ridge minimizer
//! is `(X^T X + lambda I)^-1 X^T y`, independent of the `1/n` scaling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::OutcomeKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ridge,
    Logistic,
    /// One-vs-rest logistic heads over four classes.
    Multinomial4,
}

impl ModelKind {
    pub fn for_outcome(kind: OutcomeKind) -> Self {
        match kind {
            OutcomeKind::Continuous => ModelKind::Ridge,
            OutcomeKind::Binary => ModelKind::Logistic,
            OutcomeKind::Multiclass4 => ModelKind::Multinomial4,
        }
    }

    pub fn heads(self) -> usize {
        match self {
            ModelKind::Multinomial4 => 4,
            _ => 1,
        }
    }

    fn is_classifier(self) -> bool {
        self != ModelKind::Ridge
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub eta: f64,
    pub iterations: usize,
    pub fit_intercept: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lambda: 1.0, eta: 0.01, iterations: 100, fit_intercept: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be a nonnegative number, got {}", self.lambda)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be a nonnegative number, got {}", self.eta)));
        }
        Ok(())
    }
}

/// One linear head: intercept plus weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub heads: Vec<Head>,
    pub config: TrainConfig,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Linear scores `X w + b` for one head.
fn head_scores(x: &DMatrix<f64>, intercept: f64, w: &DVector<f64>) -> DVector<f64> {
    let mut s = x * w;
    s.add_scalar_mut(intercept);
    s
}

/// Objective `J` of one head at `(intercept, w)`.
pub fn objective(
    kind: ModelKind,
    x: &DMatrix<f64>,
    y: &[f64],
    intercept: f64,
    w: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let s = head_scores(x, intercept, w);
    let data: f64 = s
        .iter()
        .zip(y)
        .map(|(&s, &y)| {
            if kind.is_classifier() {
                softplus(s) - y * s
            } else {
                0.5 * (s - y) * (s - y)
            }
        })
        .sum();
    (data + 0.5 * lambda * w.norm_squared()) / x.nrows() as f64
}

/// Gradient of [`objective`]: `(d/d intercept, d/d w)`.
pub fn gradient(
    kind: ModelKind,
    x: &DMatrix<f64>,
    y: &[f64],
    intercept: f64,
    w: &DVector<f64>,
    lambda: f64,
) -> (f64, DVector<f64>) {
    let n = x.nrows() as f64;
    let mut r = head_scores(x, intercept, w);
    for (ri, &yi) in r.iter_mut().zip(y) {
        *ri = if kind.is_classifier() { sigmoid(*ri) - yi } else { *ri - yi };
    }
    let g_b = r.sum() / n;
    let g_w = (x.tr_mul(&r) + w * lambda) / n;
    (g_b, g_w)
}

fn check_targets(kind: ModelKind, y: &[f64]) -> Result<()> {
    let n_classes = match kind {
        ModelKind::Ridge => None,
        ModelKind::Logistic => Some(2.0),
        ModelKind::Multinomial4 => Some(4.0),
    };
    for (i, &v) in y.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::data_at(i, "non-finite target"));
        }
        if let Some(n) = n_classes {
            if v.fract() != 0.0 || v < 0.0 || v >= n {
                return Err(Error::data_at(i, format!("{v} is not a class label for {kind:?}")));
            }
        }
    }
    Ok(())
}

pub fn train(x: &DMatrix<f64>, y: &[f64], kind: ModelKind, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if x.nrows() == 0 {
        return Err(Error::data("cannot train on zero rows"));
    }
    if y.len() != x.nrows() {
        return Err(Error::shape(format!("{} targets", x.nrows()), y.len()));
    }
    check_targets(kind, y)?;

    let mut heads = Vec::with_capacity(kind.heads());
    for head in 0..kind.heads() {
        let targets: Vec<f64> = match kind {
            ModelKind::Multinomial4 => y.iter().map(|&v| (v == head as f64) as u8 as f64).collect(),
            _ => y.to_vec(),
        };
        let mut b = 0.0;
        let mut w = DVector::zeros(x.ncols());
        for iteration in 1..=cfg.iterations {
            let (g_b, g_w) = gradient(kind, x, &targets, b, &w, cfg.lambda);
            if !g_b.is_finite() || g_w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerics { iteration, message: "gradient is not finite".into() });
            }
            if cfg.fit_intercept {
                b -= cfg.eta * g_b;
            }
            w.axpy(-cfg.eta, &g_w, 1.0);
        }
        heads.push(Head { intercept: b, weights: w.iter().copied().collect() });
    }
    Ok(LinearModel { kind, heads, config: *cfg })
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.heads[0].weights.len()
    }

    /// Raw head scores, `n x heads`.
    pub fn scores(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::shape(format!("{} features", self.n_features()), x.ncols()));
        }
        let mut out = DMatrix::zeros(x.nrows(), self.heads.len());
        for (h, head) in self.heads.iter().enumerate() {
            let w = DVector::from_row_slice(&head.weights);
            out.set_column(h, &head_scores(x, head.intercept, &w));
        }
        Ok(out)
    }

    /// Ridge: real-valued predictions. Classifiers: class labels, with ties
    /// going to the lowest class index.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let scores = self.scores(x)?;
        Ok(match self.kind {
            ModelKind::Ridge => scores.column(0).iter().copied().collect(),
            ModelKind::Logistic => scores.column(0).iter().map(|&s| (s > 0.0) as u8 as f64).collect(),
            ModelKind::Multinomial4 => scores.row_iter().map(|r| argmax(r.iter().copied()) as f64).collect(),
        })
    }

    /// Class probabilities, `n x classes`: sigmoid for binary models,
    /// softmax over head scores for the four-class model.
    pub fn probabilities(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let scores = self.scores(x)?;
        match self.kind {
            ModelKind::Ridge => Err(Error::Config("ridge models have no class probabilities".into())),
            ModelKind::Logistic => Ok(DMatrix::from_fn(x.nrows(), 2, |i, c| {
                let p = sigmoid(scores[(i, 0)]);
                if c == 1 { p } else { 1.0 - p }
            })),
            ModelKind::Multinomial4 => {
                let mut p = scores;
                for mut row in p.row_iter_mut() {
                    let max = row.max();
                    row.apply(|v| *v = (*v - max).exp());
                    let z = row.sum();
                    row /= z;
                }
                Ok(p)
            }
        }
    }
}

/// Index of the first maximum.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
