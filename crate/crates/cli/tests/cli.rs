use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hlreduce_core::corpus::{load_embeddings, save_embeddings, EmbeddingFormat, EmbeddingTable, Level};
use hlreduce_core::reduce::load_reducer;
use hlreduce_core::synth::{generate, SyntheticConfig, TaskFiles};

fn hlreduce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlreduce")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn task(dir: &Path, users: usize, dims: usize, n_train: usize) -> TaskFiles {
    let data = generate(&SyntheticConfig {
        users,
        dims,
        signal_ranks: vec![1, 2],
        outcome_noise_sd: 1.0,
        seed: 9,
        ..Default::default()
    });
    data.write_task(dir, n_train).unwrap()
}

fn write_config(dir: &Path, f: &TaskFiles, sweep: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    let text = format!(
        r#"seed = 4
pretrain = "{}"

[[tasks]]
name = "synthetic"
kind = "continuous"
train_features = "{}"
train_outcomes = "{}"
test_features = "{}"
test_outcomes = "{}"

[sweep]
{sweep}
"#,
        s(&f.pretrain),
        s(&f.train_features),
        s(&f.train_outcomes),
        s(&f.test_features),
        s(&f.test_outcomes)
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn fit_reducer_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let f = task(dir.path(), 150, 32, 100);
    let a = dir.path().join("a.edr1");
    let b = dir.path().join("b.edr1");
    for out in [&a, &b] {
        let o = hlreduce(&["--seed", "3", "fit-reducer", "--input", s(&f.pretrain), "--method", "pca", "--k", "16", "--output", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("pca 32->16 rows=100"));
    }
    let model = load_reducer(&a).unwrap();
    assert_eq!((model.in_dims, model.out_dims), (32, 16));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let reduced = dir.path().join("reduced.csv");
    let o = hlreduce(&["transform", "--reducer", s(&a), "--input", s(&f.test_features), "--output", s(&reduced)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = load_embeddings(&reduced, EmbeddingFormat::Csv).unwrap();
    assert_eq!((t.rows(), t.dims()), (50, 16));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let f = task(dir.path(), 5, 8, 5);
    let out = dir.path().join("n.edr1");
    // Too few rows for the autoencoder is a configuration error.
    let o = hlreduce(&["--seed", "1", "fit-reducer", "--input", s(&f.pretrain), "--method", "nlae", "--k", "2", "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("10"));
    // No seed anywhere.
    let o = hlreduce(&["fit-reducer", "--input", s(&f.pretrain), "--method", "pca", "--k", "2", "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    // Unreadable input is a runtime error.
    let o = hlreduce(&["--seed", "1", "fit-reducer", "--input", "/nonexistent.ueb", "--method", "pca", "--k", "2"]);
    assert_eq!(o.status.code(), Some(1));
    // Unknown method is rejected by argument parsing.
    let o = hlreduce(&["--seed", "1", "fit-reducer", "--input", s(&f.pretrain), "--method", "svd", "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_cardinality_resume_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let f = task(dir.path(), 260, 16, 180);
    let cfg = write_config(dir.path(), &f, "methods = [\"pca\"]\nk = [4, 8]\nn_ta = [40, 80]\ninclude_full = false");
    let clean = dir.path().join("clean");
    let o = hlreduce(&["--config", s(&cfg), "--out", s(&clean), "sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(clean.join("results.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "task,method,k,n_ta,mean,std_error,ci_low,ci_high,seed");
    assert_eq!(csv.lines().count(), 5);

    let partial = dir.path().join("partial");
    assert!(hlreduce(&["--config", s(&cfg), "--out", s(&partial), "--jobs", "2", "sweep"]).status.success());
    fs::remove_file(partial.join("results.csv")).unwrap();
    fs::remove_file(partial.join("cells/synthetic/pca_k4_n80.json")).unwrap();
    let o = hlreduce(&["--config", s(&cfg), "--out", s(&partial), "--resume", "sweep"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("(3 reused)"));
    for name in ["results.csv", "results.json", "fkp.csv", "fkp.json", "manifest.json"] {
        assert_eq!(fs::read(clean.join(name)).unwrap(), fs::read(partial.join(name)).unwrap(), "{name}");
    }

    let rebuilt = dir.path().join("rebuilt");
    let o = hlreduce(&["--out", s(&rebuilt), "fkp", "--results", s(&clean.join("results.json"))]);
    assert!(o.status.success());
    assert_eq!(fs::read(rebuilt.join("fkp.csv")).unwrap(), fs::read(clean.join("fkp.csv")).unwrap());

    let o = hlreduce(&["--config", s(&cfg), "--seed", "5", "--out", s(&partial), "--resume", "sweep"]);
    assert_eq!(o.status.code(), Some(2), "a different seed changes the config hash");
}

#[test]
fn plots_from_results() {
    let dir = tempfile::tempdir().unwrap();
    let f = task(dir.path(), 260, 16, 180);
    let cfg = write_config(dir.path(), &f, "methods = [\"pca\"]\nk = [2, 4, 8]\nn_ta = [40, 80]");
    let run = dir.path().join("run");
    assert!(hlreduce(&["--config", s(&cfg), "--out", s(&run), "sweep"]).status.success());
    let plots = dir.path().join("plots");
    let o = hlreduce(&["--out", s(&plots), "plot", "--results", s(&run.join("results.json"))]);
    assert!(o.status.success());
    let files: Vec<_> = fs::read_dir(&plots).unwrap().collect();
    assert_eq!(files.len(), 1);
    let svg = fs::read_to_string(plots.join("synthetic_pca.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    for k in ["2", "4", "8"] {
        assert!(svg.contains("class=\"xtick\"") && svg.contains(&format!(">{k}</text>")));
    }
    assert!(!svg.contains(">16</text>"), "the unreduced width is a reference line, not a tick");

    let mut doc: serde_json::Value = serde_json::from_slice(&fs::read(run.join("results.json")).unwrap()).unwrap();
    doc["cells"] = serde_json::json!([]);
    let empty = dir.path().join("empty.json");
    fs::write(&empty, serde_json::to_vec(&doc).unwrap()).unwrap();
    let none = dir.path().join("none");
    let o = hlreduce(&["--out", s(&none), "plot", "--results", s(&empty)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("warn"));
    assert!(!none.exists());
}

#[test]
fn evaluate_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let f = task(dir.path(), 200, 12, 150);
    let out = dir.path().join("eval");
    let o = hlreduce(&[
        "--seed", "2", "--out", s(&out), "evaluate",
        "--train-features", s(&f.train_features), "--train-outcomes", s(&f.train_outcomes),
        "--test-features", s(&f.test_features), "--test-outcomes", s(&f.test_outcomes),
        "--kind", "continuous", "--n-ta", "60",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], ["task", "full", "12", "60"]);
    let mean: f64 = row[4].parse().unwrap();
    assert!(mean > 0.3, "{mean}");
    assert!(out.join("evaluate_task_full_k12_n60.json").is_file());
}

#[test]
fn aggregate_messages() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (0..6).map(|i| format!("m{i}")).collect();
    let groups: Vec<String> = ["a", "a", "b", "b", "b", "c"].iter().map(|g| g.to_string()).collect();
    let data: Vec<f32> = (0..12).map(|v| v as f32).collect();
    let table = EmbeddingTable::new(ids, data, 2, Level::Message, Some(groups)).unwrap();
    let input = dir.path().join("messages.ueb");
    save_embeddings(&table, &input, EmbeddingFormat::Binary).unwrap();
    let output = dir.path().join("users.csv");
    let o = hlreduce(&["aggregate", "--input", s(&input), "--output", s(&output)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let users = load_embeddings(&output, EmbeddingFormat::Csv).unwrap();
    assert_eq!(users.ids(), ["a", "b", "c"]);
    assert_eq!(users.row(1), [6.0, 7.0]);
    let o = hlreduce(&["aggregate", "--input", s(&input), "--output", s(&output), "--cap", "1"]);
    assert_eq!(o.status.code(), Some(2), "a message cap samples and needs a seed");
}
