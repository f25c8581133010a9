//! Grid sweep: fit (or reuse) each reducer, evaluate every cell, and write
//! the result documents.
//!
//! Output directory layout:
//!
//! ```text
//! manifest.json          config hash, seed, input hashes, output hashes
//! results.csv            one row per (task, method, k, n_ta)
//! results.json           raw replicate scores and the resolved config
//! fkp.csv, fkp.json      first-k-to-peak summary
//! cells/<task>/...json   per-cell results, reused by --resume
//! reducers/*.edr1        fitted reducers keyed by method, k, inputs, seed
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::corpus::{load_embeddings, load_outcomes, EmbeddingFormat, TaskDataset};
use crate::error::{Error, Result};
use crate::eval::{bootstrap_matrices, BootstrapResult, EvalData};
use crate::fkp::FkpReport;
use crate::fsutil;
use crate::reduce::{self, load_reducer, save_reducer, Method, ReducerModel};
use crate::report::{fkp_json, ResultsDocument, TaskInfo};
use crate::seed;

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub out_dir: PathBuf,
    /// Reuse cell files left by an earlier run of the same config.
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub config_hash: String,
    pub seed: u64,
    pub pretrain_sha256: String,
    pub cells: usize,
    /// Output file name to hex SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct CellFile {
    config_hash: String,
    result: BootstrapResult,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub results: ResultsDocument,
    pub fkp: FkpReport,
    pub manifest: Manifest,
    pub reducers_fitted: usize,
    pub cells_reused: usize,
}

/// Sentinel method label for the unreduced column's shared cell files.
const FULL: &str = "full";

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

/// Seed shared by every (method, k) cell of one task and `n_ta`, so that all
/// reductions are compared on the same bootstrap samples.
pub fn cell_seed(master: u64, task: &str, n_ta: usize) -> u64 {
    seed::derive(master, format!("cell/{task}/{n_ta}").as_bytes())
}

pub fn reducer_seed(master: u64, method: Method, k: usize) -> u64 {
    seed::derive(master, format!("reducer/{method}/{k}").as_bytes())
}

struct Task {
    info: TaskInfo,
    data: EvalData,
}

fn load_task(cfg: &ExperimentConfig, t: &crate::config::TaskConfig) -> Result<Task> {
    let load = |p: &Path| load_embeddings(&cfg.resolve(p), EmbeddingFormat::from_path(p));
    let ds = TaskDataset::new(
        t.name.clone(),
        &load(&t.train_features)?,
        &load_outcomes(&cfg.resolve(&t.train_outcomes), t.kind)?,
        &load(&t.test_features)?,
        &load_outcomes(&cfg.resolve(&t.test_outcomes), t.kind)?,
    )?;
    let data = EvalData::from_dataset(&ds);
    Ok(Task {
        info: TaskInfo { name: t.name.clone(), family: t.family().to_string(), kind: t.kind, full_dims: data.dims() },
        data,
    })
}

fn cell_path(out: &Path, task: &str, method: &str, k: usize, n_ta: usize) -> PathBuf {
    out.join("cells").join(task).join(format!("{method}_k{k}_n{n_ta}.json"))
}

fn read_cell(path: &Path, config_hash: &str) -> Option<BootstrapResult> {
    let bytes = std::fs::read(path).ok()?;
    let cell: CellFile = serde_json::from_slice(&bytes).ok()?;
    (cell.config_hash == config_hash).then_some(cell.result)
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out: &'a Path,
    resume: bool,
    hash: String,
    seed: u64,
}

impl Runner<'_> {
    /// Evaluate (or reuse) every `n_ta` cell of every task for one reduction.
    /// Returns the results and how many were reused.
    fn run_cells(
        &self,
        tasks: &[Task],
        label: &str,
        k: usize,
        reduced: &[EvalData],
    ) -> Result<(Vec<BootstrapResult>, usize)> {
        let n_tas = ExperimentConfig::grid(&self.cfg.sweep.n_ta);
        let jobs: Vec<(usize, usize)> =
            (0..tasks.len()).flat_map(|t| n_tas.iter().map(move |&n| (t, n))).collect();
        let results = jobs
            .par_iter()
            .map(|&(t, n_ta)| {
                let name = &tasks[t].info.name;
                let path = cell_path(self.out, name, label, k, n_ta);
                if self.resume {
                    if let Some(r) = read_cell(&path, &self.hash) {
                        return Ok((r, true));
                    }
                }
                let r = bootstrap_matrices(&reduced[t], label, n_ta, cell_seed(self.seed, name, n_ta), &self.cfg.eval)?;
                let file = CellFile { config_hash: self.hash.clone(), result: r };
                fsutil::write_atomic(&path, &json_bytes(&file))?;
                Ok((file.result, false))
            })
            .collect::<Result<Vec<_>>>()?;
        let reused = results.iter().filter(|r| r.1).count();
        Ok((results.into_iter().map(|r| r.0).collect(), reused))
    }

    fn all_cells_cached(&self, tasks: &[Task], label: &str, k: usize) -> bool {
        self.resume
            && tasks.iter().all(|t| {
                self.cfg
                    .sweep
                    .n_ta
                    .iter()
                    .all(|&n| read_cell(&cell_path(self.out, &t.info.name, label, k, n), &self.hash).is_some())
            })
    }

    fn reducer(&self, method: Method, k: usize, pretrain: &DMatrix<f64>, pretrain_hash: &str) -> Result<(ReducerModel, bool)> {
        let fit_seed = reducer_seed(self.seed, method, k);
        let opts = self.cfg.reduce.fit_options(fit_seed);
        let opts_hash = fsutil::sha256_hex(&serde_json::to_vec(&opts).expect("serializable"));
        let path = self.out.join("reducers").join(format!(
            "{method}_k{k}_{}_{}_{fit_seed:016x}.edr1",
            &pretrain_hash[..16],
            &opts_hash[..16]
        ));
        if path.is_file() {
            match load_reducer(&path) {
                Ok(m) if m.in_dims == pretrain.ncols() && m.out_dims == k && m.method == method => {
                    log::info!("reducer cache hit: {}", path.display());
                    return Ok((m, false));
                }
                _ => log::warn!("ignoring unusable cached reducer {}", path.display()),
            }
        }
        log::info!("fitting {method} k={k} on {}x{}", pretrain.nrows(), pretrain.ncols());
        let model = reduce::fit(method, pretrain, k, &opts)?;
        save_reducer(&model, &path)?;
        Ok((model, true))
    }
}

/// Run the whole grid described by `cfg` into `opts.out_dir`.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &SweepOptions) -> Result<SweepOutcome> {
    cfg.validate()?;
    let master = cfg.seed()?;
    let hash = cfg.hash();
    let out = opts.out_dir.as_path();
    let manifest_path = out.join("manifest.json");

    if opts.resume {
        if let Ok(bytes) = std::fs::read(&manifest_path) {
            let old: Manifest = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
            if old.config_hash != hash {
                return Err(Error::Config(format!(
                    "{} was produced by a different config (hash {}); rerun without --resume or use another --out",
                    out.display(),
                    old.config_hash
                )));
            }
        }
    }

    let pretrain_path = cfg.resolve(&cfg.pretrain);
    let pretrain_hash = fsutil::file_sha256(&pretrain_path)?;
    let mut manifest = Manifest {
        status: "running".into(),
        config_hash: hash.clone(),
        seed: master,
        pretrain_sha256: pretrain_hash.clone(),
        cells: 0,
        outputs: BTreeMap::new(),
    };
    fsutil::write_atomic(&manifest_path, &json_bytes(&manifest))?;

    let pretrain = load_embeddings(&pretrain_path, EmbeddingFormat::from_path(&pretrain_path))?.to_matrix();
    let dims = pretrain.ncols();
    let tasks = cfg.tasks.iter().map(|t| load_task(cfg, t)).collect::<Result<Vec<_>>>()?;
    if let Some(t) = tasks.iter().find(|t| t.info.full_dims != dims) {
        return Err(Error::shape(format!("{dims} dims (pre-training width) for task {}", t.info.name), t.info.full_dims));
    }

    let ks = ExperimentConfig::grid(&cfg.sweep.k);
    if let Some(&k) = ks.iter().find(|&&k| k > dims) {
        return Err(Error::Config(format!("k = {k} exceeds the embedding width {dims}")));
    }
    let reduced_ks: Vec<usize> = ks.iter().copied().filter(|&k| k < dims).collect();
    let include_full = cfg.sweep.include_full || ks.contains(&dims);

    let runner = Runner { cfg, out, resume: opts.resume, hash: hash.clone(), seed: master };
    let mut cells: Vec<BootstrapResult> = Vec::new();
    let mut reducers_fitted = 0;
    let mut cells_reused = 0;

    let full = if include_full {
        let raw: Vec<EvalData> = tasks.iter().map(|t| t.data.clone()).collect();
        let (r, reused) = runner.run_cells(&tasks, FULL, dims, &raw)?;
        cells_reused += reused;
        r
    } else {
        Vec::new()
    };

    for &method in &cfg.sweep.methods {
        for &k in &reduced_ks {
            let label = method.name();
            let reduced: Vec<EvalData> = if runner.all_cells_cached(&tasks, label, k) {
                tasks.iter().map(|t| t.data.clone()).collect()
            } else {
                let (model, fitted) = runner.reducer(method, k, &pretrain, &pretrain_hash)?;
                reducers_fitted += fitted as usize;
                tasks
                    .iter()
                    .map(|t| {
                        Ok(EvalData {
                            train_x: model.transform_matrix(&t.data.train_x)?,
                            test_x: model.transform_matrix(&t.data.test_x)?,
                            ..t.data.clone()
                        })
                    })
                    .collect::<Result<_>>()?
            };
            let (r, reused) = runner.run_cells(&tasks, label, k, &reduced)?;
            cells_reused += reused;
            cells.extend(r);
        }
        cells.extend(full.iter().cloned().map(|mut c| {
            c.method = method.name().to_string();
            c
        }));
    }

    // Stable order: task (config order), method (config order), k, n_ta.
    let task_rank = |name: &str| cfg.tasks.iter().position(|t| t.name == name).unwrap_or(usize::MAX);
    let method_rank = |m: &str| cfg.sweep.methods.iter().position(|x| x.name() == m).unwrap_or(usize::MAX);
    cells.sort_by(|a, b| {
        (task_rank(&a.task_name), method_rank(&a.method), a.k, a.n_ta)
            .cmp(&(task_rank(&b.task_name), method_rank(&b.method), b.k, b.n_ta))
    });

    let mut resolved = cfg.clone();
    resolved.out = None;
    let results = ResultsDocument {
        config_hash: hash.clone(),
        seed: master,
        config: serde_json::to_value(&resolved).expect("config serializes"),
        tasks: tasks.iter().map(|t| t.info.clone()).collect(),
        cells,
    };
    let fkp = results.fkp_report()?;

    let files: [(&str, Vec<u8>); 4] = [
        ("results.csv", results.to_csv().into_bytes()),
        ("results.json", results.to_json()),
        ("fkp.csv", fkp.to_csv().into_bytes()),
        ("fkp.json", fkp_json(&fkp)),
    ];
    for (name, bytes) in &files {
        fsutil::write_atomic(&out.join(name), bytes)?;
        manifest.outputs.insert(name.to_string(), fsutil::sha256_hex(bytes));
    }
    manifest.status = "complete".into();
    manifest.cells = results.cells.len();
    fsutil::write_atomic(&manifest_path, &json_bytes(&manifest))?;

    Ok(SweepOutcome { results, fkp, manifest, reducers_fitted, cells_reused })
}
