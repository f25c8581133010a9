//! Gaussian factor analysis `x = L z + mu + e`, `e ~ N(0, diag(psi))`,
//! fitted by EM on the sample covariance.
//!
//! Every inverse that touches `in_dims` goes through the `k x k` matrix
//! `M = I + L^T Psi^-1 L`, so each iteration is `O(d^2 k)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

use super::{check_k, FitMeta, Method, Params, ReducerModel};

/// Lower bound on noise variances.
pub const PSI_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaOptions {
    pub iters: usize,
    /// Stop when the relative change in mean log-likelihood drops below this.
    pub tol: f64,
}

impl Default for FaOptions {
    fn default() -> Self {
        FaOptions { iters: 200, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaParams {
    /// `in_dims x k`
    pub loadings: DMatrix<f64>,
    pub noise: DVector<f64>,
    pub mean: DVector<f64>,
}

struct Posterior {
    /// `M^-1`, the posterior covariance of `z`.
    m_inv: DMatrix<f64>,
    /// `M^-1 L^T Psi^-1`, `k x d`.
    beta: DMatrix<f64>,
    log_det_m: f64,
}

fn posterior(loadings: &DMatrix<f64>, noise: &DVector<f64>) -> Posterior {
    let k = loadings.ncols();
    let mut scaled_t = loadings.transpose(); // L^T Psi^-1
    for (j, mut col) in scaled_t.column_iter_mut().enumerate() {
        col /= noise[j];
    }
    let m = DMatrix::identity(k, k) + &scaled_t * loadings;
    let chol = Cholesky::new(m).expect("I + L^T Psi^-1 L is positive definite");
    let log_det_m = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let m_inv = chol.inverse();
    let beta = &m_inv * scaled_t;
    Posterior { m_inv, beta, log_det_m }
}

/// Mean Gaussian log-likelihood of data with (MLE) covariance `s`.
fn mean_log_likelihood(s: &DMatrix<f64>, loadings: &DMatrix<f64>, noise: &DVector<f64>) -> f64 {
    let d = s.nrows() as f64;
    let post = posterior(loadings, noise);
    let log_det = noise.iter().map(|v| v.ln()).sum::<f64>() + post.log_det_m;
    // tr(Sigma^-1 S) = sum S_ii / psi_i - tr(M^-1 L^T Psi^-1 S Psi^-1 L)
    let diag_term: f64 = (0..s.nrows()).map(|i| s[(i, i)] / noise[i]).sum();
    let mut scaled = loadings.clone(); // Psi^-1 L
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row /= noise[i];
    }
    let inner = scaled.transpose() * s * &scaled;
    let correction = (&post.m_inv * inner).trace();
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det + diag_term - correction)
}

impl FaParams {
    /// Posterior means `E[z | x]`.
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let post = posterior(&self.loadings, &self.noise);
        linalg::center(x, &self.mean) * post.beta.transpose()
    }
}

pub fn fit_fa(x: &DMatrix<f64>, k: usize, opts: &FaOptions) -> Result<ReducerModel> {
    check_k(k, x.nrows(), x.ncols(), false)?;
    if opts.iters == 0 {
        return Err(Error::Config("FA needs at least one EM iteration".into()));
    }
    let n = x.nrows() as f64;
    let d = x.ncols();
    let mean = linalg::column_means(x);
    let centered = linalg::center(x, &mean);
    let mut s = centered.tr_mul(&centered);
    s /= n;
    s.fill_lower_triangle_with_upper_triangle();

    // Start from the probabilistic-PCA solution.
    let (values, vectors) = linalg::symmetric_eigen_desc(s.clone());
    let sigma2 = if k < d {
        values.iter().skip(k).map(|v| v.max(0.0)).sum::<f64>() / (d - k) as f64
    } else {
        0.0
    };
    let mut loadings = DMatrix::from_fn(d, k, |i, j| {
        vectors[(i, j)] * (values[j] - sigma2).max(1e-3 * values[j].max(PSI_FLOOR)).sqrt()
    });
    let mut noise = DVector::from_fn(d, |i, _| s[(i, i)].max(PSI_FLOOR));

    let mut trace = vec![mean_log_likelihood(&s, &loadings, &noise)];
    let mut clamped = 0u64;
    let mut iterations = 0u64;
    for _ in 0..opts.iters {
        let post = posterior(&loadings, &noise);
        let sb = &s * post.beta.transpose(); // S beta^T, d x k
        let ezz = &post.m_inv + &post.beta * &sb;
        let ezz_inv = Cholesky::new(ezz)
            .ok_or_else(|| Error::Numerics {
                iteration: iterations as usize + 1,
                message: "factor second-moment matrix lost positive definiteness".into(),
            })?
            .inverse();
        loadings = &sb * ezz_inv;
        clamped = 0;
        for i in 0..d {
            let explained: f64 = loadings.row(i).dot(&sb.row(i));
            let psi = s[(i, i)] - explained;
            noise[i] = if psi < PSI_FLOOR {
                clamped += 1;
                PSI_FLOOR
            } else {
                psi
            };
        }
        iterations += 1;
        let ll = mean_log_likelihood(&s, &loadings, &noise);
        if !ll.is_finite() {
            return Err(Error::Numerics {
                iteration: iterations as usize,
                message: "log-likelihood is not finite".into(),
            });
        }
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev).abs() <= opts.tol * prev.abs().max(1.0) {
            break;
        }
    }

    Ok(ReducerModel {
        method: Method::Fa,
        in_dims: d,
        out_dims: k,
        params: Params::Fa(FaParams { loadings, noise, mean }),
        fit_meta: FitMeta {
            n_pretrain_rows: x.nrows() as u64,
            seed: 0,
            iterations_run: iterations,
            final_objective: *trace.last().unwrap(),
            clamped,
        },
        trace,
    })
}
