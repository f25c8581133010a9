//! Synthetic user-level embeddings with a known outcome structure, for
//! demos, benchmarks and end-to-end checks.
//!
//! Embeddings are `x = U diag(s) z + noise` with a random orthonormal basis
//! `U` and a power-law spectrum `s_j^2 = j^-exponent`. The outcome is a sum
//! of selected latent coordinates plus Gaussian noise, so its signal lies in
//! a low-rank subspace spread across variance ranks.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{save_embeddings, save_outcomes, EmbeddingFormat, EmbeddingTable, OutcomeKind, OutcomeTable};
use crate::error::Result;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub users: usize,
    pub dims: usize,
    pub spectrum_exponent: f64,
    /// Standard deviation of isotropic embedding noise.
    pub noise_sd: f64,
    /// 1-based latent ranks that carry outcome signal.
    pub signal_ranks: Vec<usize>,
    pub outcome_noise_sd: f64,
    /// Binary outcomes split the continuous score at its median.
    pub kind: OutcomeKind,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 2000,
            dims: 768,
            spectrum_exponent: 1.0,
            noise_sd: 0.05,
            signal_ranks: vec![1, 2, 4, 8, 16, 32, 64, 128],
            outcome_noise_sd: 2.0,
            kind: OutcomeKind::Continuous,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub ids: Vec<String>,
    /// `users x dims`
    pub embeddings: DMatrix<f64>,
    pub outcomes: Vec<f64>,
    pub kind: OutcomeKind,
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticData {
    let (n, d) = (cfg.users, cfg.dims);
    let mut rng = seed::rng(seed::derive(cfg.seed, b"synthetic/basis"));
    let gauss = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let basis = gauss.qr().q();

    let mut rng = seed::rng(seed::derive(cfg.seed, b"synthetic/latent"));
    let z: DMatrix<f64> = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let mut scaled = z.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= ((j + 1) as f64).powf(-cfg.spectrum_exponent / 2.0);
    }
    let mut x = scaled * basis.transpose();
    let noise = Normal::new(0.0, cfg.noise_sd.max(0.0)).expect("finite sd");
    let mut rng = seed::rng(seed::derive(cfg.seed, b"synthetic/noise"));
    x.apply(|v| *v += noise.sample(&mut rng));

    let eps = Normal::new(0.0, cfg.outcome_noise_sd.max(0.0)).expect("finite sd");
    let mut rng = seed::rng(seed::derive(cfg.seed, b"synthetic/outcome"));
    let score: Vec<f64> = (0..n)
        .map(|i| {
            cfg.signal_ranks.iter().filter(|&&r| r >= 1 && r <= d).map(|&r| z[(i, r - 1)]).sum::<f64>()
                + eps.sample(&mut rng)
        })
        .collect();
    let outcomes = match cfg.kind {
        OutcomeKind::Continuous => score,
        OutcomeKind::Binary => {
            let mut sorted = score.clone();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[n / 2];
            score.iter().map(|&s| (s >= median) as u8 as f64).collect()
        }
        OutcomeKind::Multiclass4 => {
            let mut sorted = score.clone();
            sorted.sort_by(f64::total_cmp);
            let cuts = [sorted[n / 4], sorted[n / 2], sorted[3 * n / 4]];
            score.iter().map(|&s| cuts.iter().filter(|&&c| s >= c).count() as f64).collect()
        }
    };
    let width = n.to_string().len();
    SyntheticData {
        ids: (0..n).map(|i| format!("u{i:0width$}")).collect(),
        embeddings: x,
        outcomes,
        kind: cfg.kind,
    }
}

/// Paths of one written task.
#[derive(Debug, Clone)]
pub struct TaskFiles {
    pub pretrain: PathBuf,
    pub train_features: PathBuf,
    pub train_outcomes: PathBuf,
    pub test_features: PathBuf,
    pub test_outcomes: PathBuf,
}

impl SyntheticData {
    fn table(&self, rows: std::ops::Range<usize>) -> Result<EmbeddingTable> {
        let sub = self.embeddings.rows(rows.start, rows.len()).into_owned();
        EmbeddingTable::from_matrix(self.ids[rows].to_vec(), &sub)
    }

    fn outcome_table(&self, rows: std::ops::Range<usize>) -> Result<OutcomeTable> {
        OutcomeTable::new(rows.map(|i| (self.ids[i].clone(), self.outcomes[i])), self.kind)
    }

    /// Write the first `n_train` users as the training split (also used as
    /// the unlabeled pre-training set) and the rest as the test split.
    pub fn write_task(&self, dir: &Path, n_train: usize) -> Result<TaskFiles> {
        let n = self.ids.len();
        let files = TaskFiles {
            pretrain: dir.join("pretrain.ueb"),
            train_features: dir.join("train.ueb"),
            train_outcomes: dir.join("train_outcomes.csv"),
            test_features: dir.join("test.ueb"),
            test_outcomes: dir.join("test_outcomes.csv"),
        };
        let train = self.table(0..n_train)?;
        save_embeddings(&train, &files.pretrain, EmbeddingFormat::Binary)?;
        save_embeddings(&train, &files.train_features, EmbeddingFormat::Binary)?;
        save_embeddings(&self.table(n_train..n)?, &files.test_features, EmbeddingFormat::Binary)?;
        save_outcomes(&self.outcome_table(0..n_train)?, &files.train_outcomes)?;
        save_outcomes(&self.outcome_table(n_train..n)?, &files.test_outcomes)?;
        Ok(files)
    }
}
