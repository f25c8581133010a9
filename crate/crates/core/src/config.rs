//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::OutcomeKind;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::fsutil;
use crate::reduce::{FaOptions, FitOptions, Method, NlaeOptions, NmfOptions, DEFAULT_K_GRID};

pub const DEFAULT_N_TA_GRID: [usize; 5] = [50, 100, 200, 500, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    /// Summary-table column; defaults to the task name.
    #[serde(default)]
    pub family: Option<String>,
    pub kind: OutcomeKind,
    pub train_features: PathBuf,
    pub train_outcomes: PathBuf,
    pub test_features: PathBuf,
    pub test_outcomes: PathBuf,
}

impl TaskConfig {
    pub fn family(&self) -> &str {
        self.family.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    /// Target widths. A value equal to the input width selects the
    /// unreduced features.
    pub k: Vec<usize>,
    pub n_ta: Vec<usize>,
    /// Always evaluate the unreduced features as an extra column.
    pub include_full: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            methods: vec![Method::Pca],
            k: DEFAULT_K_GRID.to_vec(),
            n_ta: DEFAULT_N_TA_GRID.to_vec(),
            include_full: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceConfig {
    pub nmf: NmfOptions,
    pub fa: FaOptions,
    pub nlae: NlaeOptions,
}

impl ReduceConfig {
    pub fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions { seed, nmf: self.nmf, fa: self.fa, nlae: self.nlae }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub pretrain: PathBuf,
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub reduce: ReduceConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Fields that can change results. The output directory and the base
/// directory are excluded so a run can be relocated without changing its hash.
#[derive(Serialize)]
struct Hashed<'a> {
    seed: Option<u64>,
    pretrain: &'a Path,
    tasks: &'a [TaskConfig],
    sweep: &'a SweepConfig,
    eval: &'a EvalConfig,
    reduce: &'a ReduceConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }

    /// Hex SHA-256 of the canonical JSON form of every result-affecting field.
    pub fn hash(&self) -> String {
        let h = Hashed {
            seed: self.seed,
            pretrain: &self.pretrain,
            tasks: &self.tasks,
            sweep: &self.sweep,
            eval: &self.eval,
            reduce: &self.reduce,
        };
        fsutil::sha256_hex(&serde_json::to_vec(&h).expect("config serializes"))
    }

    /// Static checks plus existence of every referenced file.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        let s = &self.sweep;
        if s.methods.is_empty() || s.k.is_empty() || s.n_ta.is_empty() {
            return Err(Error::Config("methods, k and n_ta grids must be non-empty".into()));
        }
        if s.k.contains(&0) || s.n_ta.contains(&0) {
            return Err(Error::Config("k and n_ta values must be positive".into()));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("at least one task is required".into()));
        }
        let mut names: Vec<&str> = self.tasks.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("task {:?} is listed twice", w[0])));
        }
        if let Some(t) = self.tasks.iter().find(|t| t.name.is_empty() || t.name.contains(['/', '\\', ','])) {
            return Err(Error::Config(format!("task name {:?} must be non-empty without '/', '\\\\' or ','", t.name)));
        }
        self.eval.validate()?;
        let mut paths = vec![&self.pretrain];
        for t in &self.tasks {
            paths.extend([&t.train_features, &t.train_outcomes, &t.test_features, &t.test_outcomes]);
        }
        for p in paths {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", full.display())));
            }
        }
        Ok(())
    }

    /// Sorted, de-duplicated copy of a grid.
    pub fn grid(values: &[usize]) -> Vec<usize> {
        let mut v = values.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
pretrain = "pt.ueb"

[[tasks]]
name = "age"
kind = "continuous"
train_features = "train.ueb"
train_outcomes = "train.csv"
test_features = "test.ueb"
test_outcomes = "test.csv"
"#;

    #[test]
    fn defaults_are_materialized() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, "/data").unwrap();
        assert_eq!(cfg.sweep.k, DEFAULT_K_GRID);
        assert_eq!(cfg.sweep.n_ta, DEFAULT_N_TA_GRID);
        assert_eq!(cfg.eval.replicates, 10);
        assert_eq!(cfg.eval.model.lambda, 1.0);
        assert_eq!(cfg.tasks[0].family(), "age");
        assert_eq!(cfg.resolve(Path::new("pt.ueb")), Path::new("/data/pt.ueb"));
    }

    #[test]
    fn hash_tracks_result_fields_only() {
        let base = ExperimentConfig::from_toml(MINIMAL, "/a").unwrap();
        let h = base.hash();
        let mut moved = ExperimentConfig::from_toml(MINIMAL, "/b").unwrap();
        moved.out = Some("elsewhere".into());
        assert_eq!(moved.hash(), h);

        let edits: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
            Box::new(|c| c.seed = Some(8)),
            Box::new(|c| c.pretrain = "other.ueb".into()),
            Box::new(|c| c.tasks[0].family = Some("demo".into())),
            Box::new(|c| c.tasks[0].kind = OutcomeKind::Binary),
            Box::new(|c| c.sweep.k.push(1024)),
            Box::new(|c| c.sweep.methods.push(Method::Fa)),
            Box::new(|c| c.sweep.include_full = false),
            Box::new(|c| c.eval.model.eta = 0.02),
            Box::new(|c| c.eval.replicates = 20),
            Box::new(|c| c.reduce.nmf.iters += 1),
            Box::new(|c| c.reduce.fa.tol = 1e-3),
        ];
        for edit in edits {
            let mut c = base.clone();
            edit(&mut c);
            assert_ne!(c.hash(), h);
        }
    }

    #[test]
    fn rejects_unknown_keys_and_missing_seed() {
        let bad = format!("{MINIMAL}\n[sweep]\nkk = [1]\n");
        assert!(ExperimentConfig::from_toml(&bad, ".").unwrap_err().is_config());
        let no_seed = MINIMAL.replace("seed = 7", "");
        let cfg = ExperimentConfig::from_toml(&no_seed, ".").unwrap();
        assert!(cfg.validate().unwrap_err().is_config());
    }

    #[test]
    fn missing_files_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml(MINIMAL, dir.path()).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.is_config() && err.to_string().contains("pt.ueb"));
        for f in ["pt.ueb", "train.ueb", "train.csv", "test.ueb", "test.csv"] {
            std::fs::write(dir.path().join(f), b"").unwrap();
        }
        cfg.validate().unwrap();
    }
}
