//! Two-layer ReLU autoencoder.
//!
//! ```text
//! x_comp   = relu(relu(x W1 + b1) W2 + b2)
//! x_decomp = relu(x_comp V2 + c2) V1 + c1
//! ```
//!
//! with `W1: in x h`, `W2: h x k`, `V2: k x h`, `V1: h x in` and
//! `h = round((in + k) / 2)`. Trained on reconstruction MSE with AdamW and
//! stopped once validation loss has risen for `patience` consecutive epochs;
//! the weights from the best validation epoch are kept.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

use super::{check_k, FitMeta, Method, Params, ReducerModel};

pub const MIN_ROWS: usize = 10;
const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlaeOptions {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for NlaeOptions {
    fn default() -> Self {
        NlaeOptions {
            max_epochs: 200,
            patience: 3,
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn hidden_width(in_dims: usize, k: usize) -> usize {
    ((in_dims + k) as f64 / 2.0).round() as usize
}

/// Encoder and decoder weights. Biases are `1 x n` row matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct NlaeParams {
    pub enc_w1: DMatrix<f64>,
    pub enc_b1: DMatrix<f64>,
    pub enc_w2: DMatrix<f64>,
    pub enc_b2: DMatrix<f64>,
    pub dec_w2: DMatrix<f64>,
    pub dec_b2: DMatrix<f64>,
    pub dec_w1: DMatrix<f64>,
    pub dec_b1: DMatrix<f64>,
}

fn add_bias(m: &mut DMatrix<f64>, bias: &DMatrix<f64>) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(bias[j]);
    }
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

fn relu_backward(grad: &mut DMatrix<f64>, pre: &DMatrix<f64>) {
    grad.zip_apply(pre, |g, a| {
        if a <= 0.0 {
            *g = 0.0
        }
    });
}

fn column_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(1, m.ncols(), m.column_iter().map(|c| c.sum()))
}

struct Forward {
    a1: DMatrix<f64>,
    h1: DMatrix<f64>,
    a2: DMatrix<f64>,
    z: DMatrix<f64>,
    a3: DMatrix<f64>,
    h3: DMatrix<f64>,
    out: DMatrix<f64>,
}

impl NlaeParams {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn init(in_dims: usize, k: usize, rng: &mut impl Rng) -> Self {
        let h = hidden_width(in_dims, k);
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = DMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound));
            let b = DMatrix::from_fn(1, fan_out, |_, _| rng.random_range(-bound..bound));
            (w, b)
        };
        let (enc_w1, enc_b1) = layer(in_dims, h);
        let (enc_w2, enc_b2) = layer(h, k);
        let (dec_w2, dec_b2) = layer(k, h);
        let (dec_w1, dec_b1) = layer(h, in_dims);
        NlaeParams { enc_w1, enc_b1, enc_w2, enc_b2, dec_w2, dec_b2, dec_w1, dec_b1 }
    }

    pub fn in_dims(&self) -> usize {
        self.enc_w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.enc_w1.ncols()
    }

    pub fn out_dims(&self) -> usize {
        self.enc_w2.ncols()
    }

    pub fn parts(&self) -> [&DMatrix<f64>; 8] {
        [
            &self.enc_w1, &self.enc_b1, &self.enc_w2, &self.enc_b2,
            &self.dec_w2, &self.dec_b2, &self.dec_w1, &self.dec_b1,
        ]
    }

    pub fn parts_mut(&mut self) -> [&mut DMatrix<f64>; 8] {
        [
            &mut self.enc_w1, &mut self.enc_b1, &mut self.enc_w2, &mut self.enc_b2,
            &mut self.dec_w2, &mut self.dec_b2, &mut self.dec_w1, &mut self.dec_b1,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for p in out.parts_mut() {
            p.fill(0.0);
        }
        out
    }

    /// All parameters in a fixed order (see [`Self::parts`]).
    pub fn to_flat(&self) -> Vec<f64> {
        self.parts().iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for p in self.parts_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn forward(&self, x: &DMatrix<f64>) -> Forward {
        let mut a1 = x * &self.enc_w1;
        add_bias(&mut a1, &self.enc_b1);
        let h1 = relu(&a1);
        let mut a2 = &h1 * &self.enc_w2;
        add_bias(&mut a2, &self.enc_b2);
        let z = relu(&a2);
        let mut a3 = &z * &self.dec_w2;
        add_bias(&mut a3, &self.dec_b2);
        let h3 = relu(&a3);
        let mut out = &h3 * &self.dec_w1;
        add_bias(&mut out, &self.dec_b1);
        Forward { a1, h1, a2, z, a3, h3, out }
    }

    /// Compressed representation of each row.
    pub fn encode(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a1 = x * &self.enc_w1;
        add_bias(&mut a1, &self.enc_b1);
        let mut a2 = relu(&a1) * &self.enc_w2;
        add_bias(&mut a2, &self.enc_b2);
        relu(&a2)
    }

    pub fn reconstruct(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward(x).out
    }

    /// Mean squared reconstruction error over all entries of `x`.
    pub fn loss(&self, x: &DMatrix<f64>) -> f64 {
        (self.forward(x).out - x).norm_squared() / x.len() as f64
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>) -> (f64, NlaeParams) {
        let f = self.forward(x);
        let diff = &f.out - x;
        let scale = 1.0 / x.len() as f64;
        let loss = diff.norm_squared() * scale;

        let d_out = diff * (2.0 * scale);
        let g_dec_w1 = f.h3.tr_mul(&d_out);
        let g_dec_b1 = column_sums(&d_out);
        let mut d_a3 = &d_out * self.dec_w1.transpose();
        relu_backward(&mut d_a3, &f.a3);
        let g_dec_w2 = f.z.tr_mul(&d_a3);
        let g_dec_b2 = column_sums(&d_a3);
        let mut d_a2 = &d_a3 * self.dec_w2.transpose();
        relu_backward(&mut d_a2, &f.a2);
        let g_enc_w2 = f.h1.tr_mul(&d_a2);
        let g_enc_b2 = column_sums(&d_a2);
        let mut d_a1 = &d_a2 * self.enc_w2.transpose();
        relu_backward(&mut d_a1, &f.a1);
        let g_enc_w1 = x.tr_mul(&d_a1);
        let g_enc_b1 = column_sums(&d_a1);

        let grad = NlaeParams {
            enc_w1: g_enc_w1,
            enc_b1: g_enc_b1,
            enc_w2: g_enc_w2,
            enc_b2: g_enc_b2,
            dec_w2: g_dec_w2,
            dec_b2: g_dec_b2,
            dec_w1: g_dec_w1,
            dec_b1: g_dec_b1,
        };
        (loss, grad)
    }
}

/// AdamW with decoupled weight decay applied to every parameter.
struct AdamW {
    opts: NlaeOptions,
    m: NlaeParams,
    v: NlaeParams,
    step: i32,
}

impl AdamW {
    fn new(params: &NlaeParams, opts: NlaeOptions) -> Self {
        AdamW { opts, m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    fn update(&mut self, params: &mut NlaeParams, grad: &NlaeParams) {
        self.step += 1;
        let o = self.opts;
        let bc1 = 1.0 - o.beta1.powi(self.step);
        let bc2 = 1.0 - o.beta2.powi(self.step);
        let decay = 1.0 - o.learning_rate * o.weight_decay;
        for (((p, g), m), v) in params
            .parts_mut()
            .into_iter()
            .zip(grad.parts())
            .zip(self.m.parts_mut())
            .zip(self.v.parts_mut())
        {
            for i in 0..p.len() {
                m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
                v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] * decay - o.learning_rate * m_hat / (v_hat.sqrt() + o.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    /// This epoch is the best so far; its weights should be kept.
    pub improved: bool,
    pub stop: bool,
}

/// Stops after `patience` consecutive epochs whose validation loss exceeds
/// the previous epoch's.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    previous: Option<f64>,
    rises: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience: patience.max(1), best: f64::INFINITY, previous: None, rises: 0 }
    }

    pub fn observe(&mut self, loss: f64) -> StopDecision {
        let improved = loss < self.best;
        if improved {
            self.best = loss;
        }
        match self.previous {
            Some(prev) if loss > prev => self.rises += 1,
            _ => self.rises = 0,
        }
        self.previous = Some(loss);
        StopDecision { improved, stop: self.rises >= self.patience }
    }
}

#[derive(Debug, Clone)]
pub struct EpochOutcome<S> {
    pub best: S,
    /// 1-based.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub losses: Vec<f64>,
}

/// Drive `epoch` (1-based) until early stopping or `max_epochs`. Each call
/// returns the validation loss and a snapshot of the state after that epoch.
pub fn run_epochs<S>(
    max_epochs: usize,
    patience: usize,
    mut epoch: impl FnMut(usize) -> Result<(f64, S)>,
) -> Result<EpochOutcome<S>> {
    let mut stopper = EarlyStopping::new(patience);
    let mut best = None;
    let mut losses = Vec::new();
    for e in 1..=max_epochs.max(1) {
        let (loss, state) = epoch(e)?;
        losses.push(loss);
        let decision = stopper.observe(loss);
        if decision.improved || best.is_none() {
            best = Some((e, state));
        }
        if decision.stop {
            break;
        }
    }
    let (best_epoch, best) = best.expect("at least one epoch ran");
    Ok(EpochOutcome { best, best_epoch, epochs_run: losses.len(), losses })
}

fn rows_of(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

pub fn fit_nlae(x: &DMatrix<f64>, k: usize, opts: &NlaeOptions, seed_value: u64) -> Result<ReducerModel> {
    if x.nrows() < MIN_ROWS {
        return Err(Error::Config(format!(
            "the autoencoder needs at least {MIN_ROWS} pre-training rows for a validation split, got {}",
            x.nrows()
        )));
    }
    check_k(k, x.nrows(), x.ncols(), false)?;
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = seed::rng(seed_value);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.shuffle(&mut rng);
    let n_val = ((x.nrows() as f64 * VALIDATION_FRACTION).round() as usize).max(1);
    let val = rows_of(x, &order[..n_val]);
    let mut train_idx = order[n_val..].to_vec();

    let mut params = NlaeParams::init(x.ncols(), k, &mut rng);
    let mut optimizer = AdamW::new(&params, *opts);
    let outcome = run_epochs(opts.max_epochs, opts.patience, |epoch| {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(opts.batch_size) {
            let xb = rows_of(x, batch);
            let (loss, grad) = params.loss_and_gradient(&xb);
            if !loss.is_finite() {
                return Err(Error::Numerics { iteration: epoch, message: "autoencoder loss diverged".into() });
            }
            optimizer.update(&mut params, &grad);
        }
        Ok((params.loss(&val), params.clone()))
    })?;
    log::debug!(
        "autoencoder stopped after {} epochs, best epoch {}",
        outcome.epochs_run,
        outcome.best_epoch
    );

    Ok(ReducerModel {
        method: Method::Nlae,
        in_dims: x.ncols(),
        out_dims: k,
        params: Params::Nlae(outcome.best),
        fit_meta: FitMeta {
            n_pretrain_rows: x.nrows() as u64,
            seed: seed_value,
            iterations_run: outcome.epochs_run as u64,
            final_objective: outcome.losses[outcome.best_epoch - 1],
            clamped: 0,
        },
        trace: outcome.losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_architecture() {
        let p = NlaeParams::init(768, 128, &mut seed::rng(0));
        assert_eq!(p.hidden(), 448);
        assert_eq!(p.enc_w1.shape(), (768, 448));
        assert_eq!(p.enc_w2.shape(), (448, 128));
        assert_eq!(p.dec_w2.shape(), (128, 448));
        assert_eq!(p.dec_w1.shape(), (448, 768));
        assert_eq!(p.enc_b1.shape(), (1, 448));
        assert_eq!(p.dec_b2.shape(), (1, 448));
        assert_eq!(p.enc_b2.shape(), (1, 128));
        assert_eq!(p.dec_b1.shape(), (1, 768));
        assert_eq!(hidden_width(5, 2), 4);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(3);
        let x = DMatrix::from_fn(6, 5, |_, _| rng.random_range(-1.0..1.0));
        let mut p = NlaeParams::init(5, 2, &mut rng);
        let (_, g) = p.loss_and_gradient(&x);
        let analytic = g.to_flat();
        let flat = p.to_flat();
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut probe = flat.clone();
            probe[i] = flat[i] + h;
            p.set_flat(&probe);
            let up = p.loss(&x);
            probe[i] = flat[i] - h;
            p.set_flat(&probe);
            let down = p.loss(&x);
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
            assert!(err <= 1e-4, "parameter {i}: {} vs {numeric}", analytic[i]);
        }
    }

    #[test]
    fn early_stopping_trace() {
        let losses = [3.0, 2.0, 2.1, 2.2, 2.3, 1.0, 0.5];
        let out = run_epochs(10, 3, |e| Ok((losses[e - 1], e))).unwrap();
        assert_eq!(out.epochs_run, 5);
        assert_eq!(out.best_epoch, 2);
        assert_eq!(out.best, 2);
    }

    #[test]
    fn rises_must_be_consecutive() {
        let losses = [3.0, 3.1, 3.2, 3.0, 3.1, 3.2, 3.3, 9.0];
        let out = run_epochs(8, 3, |e| Ok((losses[e - 1], e))).unwrap();
        assert_eq!(out.epochs_run, 7);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn too_few_rows_is_config_error() {
        let x = DMatrix::from_element(5, 4, 1.0);
        assert!(matches!(
            fit_nlae(&x, 2, &NlaeOptions::default(), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fit_is_bit_reproducible() {
        let mut rng = seed::rng(12);
        let x = DMatrix::from_fn(40, 6, |_, _| rng.random_range(-1.0..1.0));
        let opts = NlaeOptions { max_epochs: 20, ..Default::default() };
        let a = fit_nlae(&x, 3, &opts, 5).unwrap();
        let b = fit_nlae(&x, 3, &opts, 5).unwrap();
        assert_eq!(a, b);
    }
}
