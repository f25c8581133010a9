//! Frobenius-norm NMF by multiplicative updates.
//!
//! Embeddings contain negative coordinates, so the fit learns a per-column
//! shift `max(0, -min_j)` that makes the pre-training matrix nonnegative; the
//! same shift is applied at transform time and anything still negative is
//! clamped to zero.
//!
//! Both updates use the damped form `h * (num + eps) / (den + eps)`, which
//! minimizes a majorizer with a larger diagonal than the classic rule and so
//! keeps the objective non-increasing while avoiding division by zero.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

use super::{check_k, FitMeta, Method, Params, ReducerModel};

/// Multiplicative-update iterations used to project unseen rows.
pub const NMF_TRANSFORM_ITERS: usize = 200;
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfOptions {
    pub iters: usize,
}

impl Default for NmfOptions {
    fn default() -> Self {
        NmfOptions { iters: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfParams {
    /// `k x in_dims`, nonnegative.
    pub dictionary: DMatrix<f64>,
    pub column_shift: DVector<f64>,
}

impl NmfParams {
    fn shifted(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v + self.column_shift[j]).max(0.0));
        }
        out
    }

    /// Nonnegative least-squares codes `W` with `x + shift ~ W H`.
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let v = self.shifted(x);
        let h = &self.dictionary;
        let k = h.nrows();
        let hht = h * h.transpose();
        let vht = &v * h.transpose();
        // Start every code at the scale that matches each row's total mass.
        let h_mass = h.sum().max(EPS);
        let mut w = DMatrix::from_fn(v.nrows(), k, |i, _| (v.row(i).sum() / h_mass).max(EPS));
        for _ in 0..NMF_TRANSFORM_ITERS {
            let den = &w * &hht;
            w.zip_zip_apply(&vht, &den, |wi, num, den| *wi *= (num + EPS) / (den + EPS));
        }
        w
    }

    pub fn reconstruct(&self, codes: &DMatrix<f64>) -> DMatrix<f64> {
        codes * &self.dictionary
    }
}

/// `0.5 * ||x - w h||_F^2`
pub fn objective(x: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    0.5 * (x - w * h).norm_squared()
}

pub fn fit_nmf(x: &DMatrix<f64>, k: usize, opts: &NmfOptions, seed_value: u64) -> Result<ReducerModel> {
    check_k(k, x.nrows(), x.ncols(), false)?;
    if opts.iters == 0 {
        return Err(Error::Config("NMF needs at least one iteration".into()));
    }
    let column_shift = DVector::from_iterator(
        x.ncols(),
        x.column_iter().map(|c| (-c.min()).max(0.0)),
    );
    let mut xs = x.clone();
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        col.apply(|v| *v = (*v + column_shift[j]).max(0.0));
    }

    let upper = xs.mean().max(EPS);
    let mut rng = seed::rng(seed_value);
    let mut w = DMatrix::from_fn(xs.nrows(), k, |_, _| rng.random_range(0.0..upper));
    let mut h = DMatrix::from_fn(k, xs.ncols(), |_, _| rng.random_range(0.0..upper));

    let mut trace = Vec::with_capacity(opts.iters + 1);
    trace.push(objective(&xs, &w, &h));
    for _ in 0..opts.iters {
        let num = w.tr_mul(&xs);
        let den = w.tr_mul(&w) * &h;
        h.zip_zip_apply(&num, &den, |hi, n, d| *hi *= (n + EPS) / (d + EPS));

        let num = &xs * h.transpose();
        let den = &w * (&h * h.transpose());
        w.zip_zip_apply(&num, &den, |wi, n, d| *wi *= (n + EPS) / (d + EPS));

        trace.push(objective(&xs, &w, &h));
    }

    let final_objective = *trace.last().unwrap();
    Ok(ReducerModel {
        method: Method::Nmf,
        in_dims: x.ncols(),
        out_dims: k,
        params: Params::Nmf(NmfParams { dictionary: h, column_shift }),
        fit_meta: FitMeta {
            n_pretrain_rows: x.nrows() as u64,
            seed: seed_value,
            iterations_run: opts.iters as u64,
            final_objective,
            clamped: 0,
        },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: &ReducerModel) -> &NmfParams {
        match &m.params {
            Params::Nmf(p) => p,
            _ => unreachable!(),
        }
    }

    /// `||x - w h||_F` of the fitted factorization.
    fn recon_error(m: &ReducerModel) -> f64 {
        (2.0 * m.fit_meta.final_objective).sqrt()
    }

    #[test]
    fn rank_one_exact() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let m = fit_nmf(&x, 1, &NmfOptions::default(), 7).unwrap();
        assert!(recon_error(&m) < 1e-6, "{}", m.fit_meta.final_objective);
        assert!(params(&m).column_shift.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn identity_exact() {
        let x = DMatrix::<f64>::identity(2, 2);
        let m = fit_nmf(&x, 2, &NmfOptions::default(), 3).unwrap();
        assert!(recon_error(&m) < 1e-6, "{}", m.fit_meta.final_objective);
    }

    #[test]
    fn monotone_and_nonnegative() {
        for s in 0..5u64 {
            let mut rng = seed::rng(100 + s);
            let x = DMatrix::from_fn(20, 8, |_, _| rng.random_range(-1.0..2.0));
            let m = fit_nmf(&x, 3, &NmfOptions { iters: 150 }, s).unwrap();
            assert!(m.trace.windows(2).all(|w| w[1] <= w[0] + 1e-10));
            let p = params(&m);
            assert!(p.dictionary.iter().all(|&v| v >= 0.0));
            assert!(p.column_shift.iter().all(|&v| v >= 0.0));
            let codes = p.transform(&x);
            assert!(codes.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn projection_recovers_training_codes_on_exact_data() {
        let w0 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let h0 = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.5]);
        let x = &w0 * &h0;
        let m = fit_nmf(&x, 2, &NmfOptions { iters: 3000 }, 1).unwrap();
        let p = params(&m);
        let codes = p.transform(&x);
        let rel = (p.reconstruct(&codes) - &x).norm() / x.norm();
        assert!(rel < 1e-2, "{rel}");
    }
}
