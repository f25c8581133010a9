use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hlreduce_core::aggregate::{aggregate_users, AggregationConfig};
use hlreduce_core::config::ExperimentConfig;
use hlreduce_core::corpus::{load_embeddings, load_outcomes, save_embeddings, EmbeddingFormat, TaskDataset};
use hlreduce_core::eval::{bootstrap_matrices, EvalConfig, EvalData};
use hlreduce_core::reduce::{self, load_reducer, save_reducer, FitOptions};
use hlreduce_core::report::{fkp_json, results_csv, write_plots, ResultsDocument};
use hlreduce_core::sweep::{reducer_seed, run_sweep, SweepOptions};
use hlreduce_core::{fsutil, Error};

use crate::{Cli, Command};

/// 2 for configuration errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|e| e.downcast_ref::<Error>().is_some_and(Error::is_config));
    if config { 2 } else { 1 }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>> {
    let Some(path) = &cli.global.config else { return Ok(None) };
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))?;
    if cli.global.seed.is_some() {
        cfg.seed = cli.global.seed;
    }
    Ok(Some(cfg))
}

fn seed(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Result<u64> {
    cli.global
        .seed
        .or(cfg.and_then(|c| c.seed))
        .ok_or_else(|| config_error("a seed is required (--seed or config `seed`)"))
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.global
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.as_ref().map(|o| c.resolve(o))))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn load_table(path: &Path) -> Result<hlreduce_core::corpus::EmbeddingTable> {
    load_embeddings(path, EmbeddingFormat::from_path(path)).with_context(|| format!("reading {}", path.display()))
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::FitReducer { input, method, k, output } => {
            let input = match (input, &cfg) {
                (Some(p), _) => p.clone(),
                (None, Some(c)) => c.resolve(&c.pretrain),
                (None, None) => return Err(config_error("fit-reducer needs --input or a config with `pretrain`")),
            };
            let master = seed(cli, cfg.as_ref())?;
            let fit_seed = reducer_seed(master, *method, *k);
            let opts = cfg.as_ref().map_or_else(
                || FitOptions { seed: fit_seed, ..Default::default() },
                |c| c.reduce.fit_options(fit_seed),
            );
            let x = load_table(&input)?.to_matrix();
            let model = reduce::fit(*method, &x, *k, &opts)
                .with_context(|| format!("fitting {method} k={k} on {}", input.display()))?;
            let output = output.clone().unwrap_or_else(|| out_dir(cli, cfg.as_ref()).join(format!("{method}_k{k}.edr1")));
            save_reducer(&model, &output)?;
            let m = &model.fit_meta;
            println!(
                "{method} {}->{} rows={} seed={} iterations={} objective={} clamped={} -> {}",
                model.in_dims,
                model.out_dims,
                m.n_pretrain_rows,
                m.seed,
                m.iterations_run,
                m.final_objective,
                m.clamped,
                output.display()
            );
        }
        Command::Transform { reducer, input, output } => {
            let model = load_reducer(reducer).with_context(|| format!("reading {}", reducer.display()))?;
            let out = model.transform(&load_table(input)?)?;
            save_embeddings(&out, output, EmbeddingFormat::from_path(output))?;
            println!("{} rows {}->{} -> {}", out.rows(), model.in_dims, model.out_dims, output.display());
        }
        Command::Evaluate { train_features, train_outcomes, test_features, test_outcomes, kind, n_ta, reducer, task } => {
            let master = seed(cli, cfg.as_ref())?;
            let eval_cfg = cfg.as_ref().map_or_else(EvalConfig::default, |c| c.eval);
            let ds = TaskDataset::new(
                task.clone(),
                &load_table(train_features)?,
                &load_outcomes(train_outcomes, *kind)?,
                &load_table(test_features)?,
                &load_outcomes(test_outcomes, *kind)?,
            )?;
            let mut data = EvalData::from_dataset(&ds);
            let label = match reducer {
                Some(path) => {
                    let model = load_reducer(path).with_context(|| format!("reading {}", path.display()))?;
                    data.train_x = model.transform_matrix(&data.train_x)?;
                    data.test_x = model.transform_matrix(&data.test_x)?;
                    model.method.name().to_string()
                }
                None => "full".to_string(),
            };
            let seed = hlreduce_core::sweep::cell_seed(master, task, *n_ta);
            let result = bootstrap_matrices(&data, &label, *n_ta, seed, &eval_cfg)?;
            let out = out_dir(cli, cfg.as_ref());
            let mut json = serde_json::to_vec_pretty(&result)?;
            json.push(b'\n');
            fsutil::write_atomic(&out.join(format!("evaluate_{task}_{label}_k{}_n{n_ta}.json", result.k)), &json)?;
            print!("{}", results_csv(std::slice::from_ref(&result)));
        }
        Command::Sweep => {
            let mut cfg = cfg.ok_or_else(|| config_error("sweep needs --config"))?;
            cfg.seed = Some(seed(cli, Some(&cfg))?);
            let out = out_dir(cli, Some(&cfg));
            let outcome = run_sweep(&cfg, &SweepOptions { out_dir: out.clone(), resume: cli.global.resume })?;
            eprintln!(
                "{} cells ({} reused), {} reducers fitted, outputs in {}",
                outcome.results.cells.len(),
                outcome.cells_reused,
                outcome.reducers_fitted,
                out.display()
            );
            print!("{}", outcome.fkp.to_csv());
        }
        Command::Fkp { results } => {
            let doc = ResultsDocument::load(results)?;
            let report = doc.fkp_report()?;
            let out = out_dir(cli, cfg.as_ref());
            fsutil::write_atomic(&out.join("fkp.csv"), report.to_csv().as_bytes())?;
            fsutil::write_atomic(&out.join("fkp.json"), &fkp_json(&report))?;
            print!("{}", report.to_csv());
        }
        Command::Plot { results } => {
            let doc = ResultsDocument::load(results)?;
            if doc.cells.is_empty() {
                log::warn!("{} holds no results; nothing to plot", results.display());
                return Ok(());
            }
            for path in write_plots(&doc, &out_dir(cli, cfg.as_ref()))? {
                println!("{}", path.display());
            }
        }
        Command::Aggregate { input, output, cap } => {
            let seed = match cap {
                Some(_) => seed(cli, cfg.as_ref())?,
                None => cli.global.seed.unwrap_or(0),
            };
            let users = aggregate_users(&load_table(input)?, &AggregationConfig { message_cap: *cap, seed })?;
            save_embeddings(&users, output, EmbeddingFormat::from_path(output))?;
            println!("{} users x {} dims -> {}", users.rows(), users.dims(), output.display());
        }
    }
    Ok(())
}

