//! Dimension reduction fitted on pre-training embeddings and applied to
//! task data.
//!
//! All five methods share [`ReducerModel`]: fit once on an unlabeled
//! pre-training matrix, serialize, and apply to any table with the same
//! input width. Applying a fitted model never draws random numbers.

mod fa;
mod io;
mod nlae;
mod nmf;
mod pca;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};

pub use fa::{fit_fa, FaOptions, FaParams, PSI_FLOOR};
pub use io::{load_reducer, reducer_from_bytes, reducer_to_bytes, save_reducer};
pub use nlae::{fit_nlae, run_epochs, EarlyStopping, EpochOutcome, NlaeOptions, NlaeParams, StopDecision};
pub use nmf::{fit_nmf, NmfOptions, NmfParams, NMF_TRANSFORM_ITERS};
pub use pca::{fit_pca, fit_pca_ppa, fit_ppa, PcaParams, PcaPpaParams, PpaParams};

/// Default target dimensionalities: powers of two from 16 to 512.
pub const DEFAULT_K_GRID: [usize; 6] = [16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pca,
    PcaPpa,
    Nmf,
    Fa,
    Nlae,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Pca, Method::PcaPpa, Method::Nmf, Method::Fa, Method::Nlae];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::PcaPpa => "pca_ppa",
            Method::Nmf => "nmf",
            Method::Fa => "fa",
            Method::Nlae => "nlae",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Method::Pca => 0,
            Method::PcaPpa => 1,
            Method::Nmf => 2,
            Method::Fa => 3,
            Method::Nlae => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.tag() == tag)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown reduction method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitMeta {
    pub n_pretrain_rows: u64,
    pub seed: u64,
    pub iterations_run: u64,
    /// Method-specific: residual variance (PCA), 0.5 * squared Frobenius
    /// error (NMF), mean log-likelihood (FA), best validation MSE (NLAE).
    pub final_objective: f64,
    /// FA noise variances clamped to the floor in the last M-step.
    pub clamped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Pca(PcaParams),
    PcaPpa(PcaPpaParams),
    Nmf(NmfParams),
    Fa(FaParams),
    Nlae(NlaeParams),
}

/// A fitted, serializable reduction from `in_dims` to `out_dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducerModel {
    pub method: Method,
    pub in_dims: usize,
    pub out_dims: usize,
    pub params: Params,
    pub fit_meta: FitMeta,
    /// Per-iteration objective recorded during fitting (not serialized).
    pub trace: Vec<f64>,
}

impl ReducerModel {
    /// Apply the fitted transform to the rows of `x`.
    pub fn transform_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.in_dims {
            return Err(Error::shape(format!("{} input dims", self.in_dims), x.ncols()));
        }
        if x.nrows() == 0 {
            return Ok(DMatrix::zeros(0, self.out_dims));
        }
        let out = match &self.params {
            Params::Pca(p) => p.transform(x),
            Params::PcaPpa(p) => p.transform(x),
            Params::Nmf(p) => p.transform(x),
            Params::Fa(p) => p.transform(x),
            Params::Nlae(p) => p.encode(x),
        };
        debug_assert_eq!(out.ncols(), self.out_dims);
        Ok(out)
    }

    /// Row-wise transform of a user-level table; ids are preserved.
    pub fn transform(&self, table: &EmbeddingTable) -> Result<EmbeddingTable> {
        if table.dims() != self.in_dims {
            return Err(Error::shape(format!("{} input dims", self.in_dims), table.dims()));
        }
        let out = self.transform_matrix(&table.to_matrix())?;
        EmbeddingTable::from_matrix(table.ids().to_vec(), &out)
    }
}

/// Options for every method; each fitter reads only its own part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub seed: u64,
    pub nmf: NmfOptions,
    pub fa: FaOptions,
    pub nlae: NlaeOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            seed: 0,
            nmf: NmfOptions::default(),
            fa: FaOptions::default(),
            nlae: NlaeOptions::default(),
        }
    }
}

/// Fit `method` at target width `k` on the pre-training rows `x`.
pub fn fit(method: Method, x: &DMatrix<f64>, k: usize, opts: &FitOptions) -> Result<ReducerModel> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("pre-training matrix contains non-finite values"));
    }
    match method {
        Method::Pca => fit_pca(x, k, opts.seed),
        Method::PcaPpa => fit_pca_ppa(x, k, opts.seed),
        Method::Nmf => fit_nmf(x, k, &opts.nmf, opts.seed),
        Method::Fa => fit_fa(x, k, &opts.fa),
        Method::Nlae => fit_nlae(x, k, &opts.nlae, opts.seed),
    }
}

pub(crate) fn check_k(k: usize, rows: usize, dims: usize, needs_rows: bool) -> Result<()> {
    if rows < 2 {
        return Err(Error::Config(format!("need at least 2 pre-training rows, got {rows}")));
    }
    let limit = if needs_rows { (rows - 1).min(dims) } else { dims };
    if k == 0 || k > limit {
        return Err(Error::Config(format!(
            "k = {k} outside 1..={limit} for a {rows}x{dims} pre-training matrix"
        )));
    }
    Ok(())
}
