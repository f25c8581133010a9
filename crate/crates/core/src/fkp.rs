//! "First k to peak" summaries over a completed sweep grid.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::BootstrapResult;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub task: String,
    pub method: String,
    pub n_ta: usize,
    pub k: usize,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/n_ta={}/k={}", self.task, self.method, self.n_ta, self.k)
    }
}

/// Bootstrap results for every (task, method, n_ta, k). The full-dimension
/// column is stored under each method with `k` equal to the input width.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub cells: BTreeMap<CellKey, BootstrapResult>,
    pub k_values: Vec<usize>,
    pub n_ta_values: Vec<usize>,
}

impl SweepGrid {
    pub fn new(mut k_values: Vec<usize>, mut n_ta_values: Vec<usize>) -> Self {
        k_values.sort_unstable();
        k_values.dedup();
        n_ta_values.sort_unstable();
        n_ta_values.dedup();
        SweepGrid { cells: BTreeMap::new(), k_values, n_ta_values }
    }

    pub fn insert(&mut self, result: BootstrapResult) {
        let key = CellKey {
            task: result.task_name.clone(),
            method: result.method.clone(),
            n_ta: result.n_ta,
            k: result.k,
        };
        self.cells.insert(key, result);
    }

    pub fn methods(&self) -> Vec<String> {
        let mut m: Vec<String> = self.cells.keys().map(|c| c.method.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    /// The `k -> result` row for one task, method and `n_ta`, or the keys
    /// of the cells it lacks.
    pub fn row(&self, task: &str, method: &str, n_ta: usize) -> Result<BTreeMap<usize, &BootstrapResult>, Vec<CellKey>> {
        let mut row = BTreeMap::new();
        let mut missing = Vec::new();
        for &k in &self.k_values {
            let key = CellKey { task: task.into(), method: method.into(), n_ta, k };
            match self.cells.get(&key) {
                Some(r) => {
                    row.insert(k, r);
                }
                None => missing.push(key),
            }
        }
        if missing.is_empty() { Ok(row) } else { Err(missing) }
    }
}

/// Smallest `k` whose mean reaches the lower CI bound of the best cell.
/// The best cell is the highest mean, ties going to the smallest `k`.
pub fn first_k_to_peak<R: std::borrow::Borrow<BootstrapResult>>(row: &BTreeMap<usize, R>) -> Result<usize> {
    let cells: Vec<(usize, f64, f64)> =
        row.iter().map(|(&k, r)| (k, r.borrow().mean, r.borrow().ci_low)).collect();
    first_k_to_peak_by(&cells)
}

/// [`first_k_to_peak`] over `(k, mean, ci_low)` triples in any order.
pub fn first_k_to_peak_by(cells: &[(usize, f64, f64)]) -> Result<usize> {
    let mut sorted = cells.to_vec();
    sorted.sort_by_key(|c| c.0);
    let peak = sorted
        .iter()
        .fold(None::<&(usize, f64, f64)>, |best, c| match best {
            Some(b) if b.1 >= c.1 => Some(b),
            _ => Some(c),
        })
        .ok_or_else(|| Error::data("cannot find a peak in an empty row"))?;
    let threshold = peak.2;
    Ok(sorted.iter().find(|c| c.1 >= threshold).map_or(peak.0, |c| c.0))
}

/// `2^median(log2 ks)`; an even count uses the midpoint of the two central logs.
pub fn exponential_median(ks: &[f64]) -> Result<f64> {
    if ks.is_empty() {
        return Err(Error::data("exponential median of an empty list"));
    }
    if let Some(bad) = ks.iter().find(|&&k| !(k > 0.0)) {
        return Err(Error::data(format!("exponential median needs positive values, got {bad}")));
    }
    let mut logs: Vec<f64> = ks.iter().map(|k| k.log2()).collect();
    logs.sort_by(f64::total_cmp);
    let n = logs.len();
    let mid = if n % 2 == 1 { logs[n / 2] } else { 0.5 * (logs[n / 2 - 1] + logs[n / 2]) };
    Ok(mid.exp2())
}

/// Integer shown in the summary table: the exponential median truncated
/// toward zero (a small guard absorbs `exp2` rounding just below an integer).
pub fn display_median(value: f64) -> u64 {
    (value + 1e-9).floor() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFkp {
    pub task: String,
    pub fkp: usize,
    pub peak_k: usize,
    pub peak_mean: f64,
    pub peak_ci_low: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkpRow {
    pub method: String,
    pub family: String,
    pub n_ta: usize,
    pub tasks: Vec<TaskFkp>,
    pub exp_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkpReport {
    pub rows: Vec<FkpRow>,
    pub families: Vec<String>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl FkpReport {
    pub fn get(&self, method: &str, family: &str, n_ta: usize) -> Option<&FkpRow> {
        self.rows.iter().find(|r| r.method == method && r.family == family && r.n_ta == n_ta)
    }

    /// Methods in first-seen order.
    pub fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method.as_str()) {
                out.push(&r.method);
            }
        }
        out
    }

    /// One line per (method, n_ta), one column per family.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,n_ta");
        for f in &self.families {
            out.push(',');
            out.push_str(f);
        }
        out.push('\n');
        let mut n_tas: Vec<usize> = self.rows.iter().map(|r| r.n_ta).collect();
        n_tas.sort_unstable();
        n_tas.dedup();
        for method in self.methods() {
            for &n_ta in &n_tas {
                out.push_str(&format!("{method},{n_ta}"));
                for f in &self.families {
                    out.push(',');
                    if let Some(r) = self.get(method, f, n_ta) {
                        out.push_str(&display_median(r.exp_median).to_string());
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

/// fkp per task and exponential medians per family, for every method and
/// `n_ta` in the grid. Families keep the order of first appearance in
/// `families` (task -> family).
pub fn build_fkp_table(grid: &SweepGrid, families: &IndexMap<String, String>) -> Result<FkpReport> {
    let mut members: IndexMap<&str, Vec<&str>> = IndexMap::new();
    for (task, family) in families {
        members.entry(family.as_str()).or_default().push(task.as_str());
    }
    let methods = grid.methods();
    if methods.is_empty() || families.is_empty() {
        return Err(Error::IncompleteGrid { missing: vec!["grid has no cells".into()] });
    }

    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for method in &methods {
        for (family, tasks) in &members {
            for &n_ta in &grid.n_ta_values {
                let mut per_task = Vec::new();
                for &task in tasks {
                    match grid.row(task, method, n_ta) {
                        Ok(row) => {
                            let fkp = first_k_to_peak(&row)?;
                            let peak = row
                                .values()
                                .fold(None::<&&BootstrapResult>, |b, r| match b {
                                    Some(b) if b.mean >= r.mean => Some(b),
                                    _ => Some(r),
                                })
                                .expect("row is non-empty");
                            per_task.push(TaskFkp {
                                task: task.to_string(),
                                fkp,
                                peak_k: peak.k,
                                peak_mean: peak.mean,
                                peak_ci_low: peak.ci_low,
                            });
                        }
                        Err(keys) => missing.extend(keys),
                    }
                }
                if per_task.len() == tasks.len() {
                    let ks: Vec<f64> = per_task.iter().map(|t| t.fkp as f64).collect();
                    rows.push(FkpRow {
                        method: method.clone(),
                        family: family.to_string(),
                        n_ta,
                        tasks: per_task,
                        exp_median: exponential_median(&ks)?,
                    });
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid { missing: missing.iter().map(ToString::to_string).collect() });
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("k_values".into(), serde_json::json!(grid.k_values));
    metadata.insert("n_ta_values".into(), serde_json::json!(grid.n_ta_values));
    metadata.insert("peak_rule".into(), serde_json::json!("smallest k with mean >= ci_low of the highest-mean cell"));
    metadata.insert("median_display".into(), serde_json::json!("floor"));
    let mut seeds: Vec<u64> = grid.cells.values().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    metadata.insert("cell_seeds".into(), serde_json::json!(seeds));
    if let Some(first) = grid.cells.values().next() {
        metadata.insert("ci_method".into(), serde_json::to_value(first.ci_method).expect("serializable"));
        metadata.insert("model".into(), serde_json::to_value(first.model).expect("serializable"));
    }
    Ok(FkpReport { rows, families: members.keys().map(|f| f.to_string()).collect(), metadata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{CiMethod, Metric};
    use crate::linmod::{ModelKind, TrainConfig};
    use proptest::prelude::*;
    use rand::Rng;

    fn cell(task: &str, method: &str, n_ta: usize, k: usize, mean: f64, half: f64) -> BootstrapResult {
        BootstrapResult {
            task_name: task.into(),
            method: method.into(),
            k,
            n_ta,
            scores: vec![mean; 10],
            mean,
            std_error: half / 2.2622,
            ci_low: mean - half,
            ci_high: mean + half,
            seed: 1,
            metric: Metric::PearsonR,
            ci_method: CiMethod::T,
            model: TrainConfig::default(),
            model_kind: ModelKind::Ridge,
        }
    }

    fn brute_force(cells: &[(usize, f64, f64)]) -> usize {
        let mut best = 0;
        for i in 1..cells.len() {
            if cells[i].1 > cells[best].1 {
                best = i;
            }
        }
        for c in cells {
            if c.1 >= cells[best].2 {
                return c.0;
            }
        }
        unreachable!()
    }

    #[test]
    fn worked_example() {
        let row: BTreeMap<usize, BootstrapResult> = [(16, 0.50), (32, 0.58), (64, 0.60), (128, 0.61)]
            .into_iter()
            .map(|(k, m)| (k, cell("t", "pca", 100, k, m, if k == 128 { 0.02 } else { 0.01 })))
            .collect();
        assert_eq!(row[&128].ci_low, 0.59);
        assert_eq!(first_k_to_peak(&row).unwrap(), 64);
    }

    #[test]
    fn trivial_rows() {
        let single: BTreeMap<usize, BootstrapResult> = [(32, cell("t", "pca", 50, 32, 0.4, 0.1))].into();
        assert_eq!(first_k_to_peak(&single).unwrap(), 32);
        let flat: Vec<(usize, f64, f64)> = [512, 16, 64].iter().map(|&k| (k, 0.3, 0.3)).collect();
        assert_eq!(first_k_to_peak_by(&flat).unwrap(), 16);
        assert!(first_k_to_peak_by(&[]).is_err());
    }

    #[test]
    fn random_rows_match_brute_force() {
        let mut rng = crate::seed::rng(42);
        let ks = [16, 32, 64, 128, 256, 512, 768];
        for _ in 0..100 {
            let cells: Vec<(usize, f64, f64)> = ks
                .iter()
                .map(|&k| {
                    let m: f64 = rng.random_range(0.0..1.0);
                    (k, m, m - rng.random_range(0.0..0.3))
                })
                .collect();
            assert_eq!(first_k_to_peak_by(&cells).unwrap(), brute_force(&cells));
        }
    }

    #[test]
    fn exponential_medians() {
        assert_eq!(exponential_median(&[16.0, 64.0, 256.0]).unwrap(), 64.0);
        assert_eq!(exponential_median(&[128.0, 512.0]).unwrap(), 256.0);
        assert_eq!(exponential_median(&[48.0]).unwrap(), 48.0);
        assert!(exponential_median(&[16.0, 0.0]).is_err());
        assert!(exponential_median(&[]).is_err());
        // Even-length lists between powers of two, as summary tables print them.
        assert_eq!(display_median(exponential_median(&[64.0, 128.0]).unwrap()), 90);
        assert_eq!(display_median(exponential_median(&[16.0, 32.0]).unwrap()), 22);
        assert_eq!(display_median(exponential_median(&[32.0, 64.0]).unwrap()), 45);
        assert_eq!(display_median(exponential_median(&[768.0, 768.0, 512.0]).unwrap()), 768);
    }

    fn grid_for(fkps: &[(&str, &str, usize, usize)]) -> SweepGrid {
        // Each task peaks (with a tight interval) exactly at its target k.
        let ks = vec![16, 32, 64, 128, 256, 512, 768];
        let mut grid = SweepGrid::new(ks.clone(), vec![]);
        for &(task, method, n_ta, target) in fkps {
            for &k in &ks {
                let mean = if k >= target { 0.5 } else { 0.1 };
                grid.insert(cell(task, method, n_ta, k, mean, 0.01));
            }
            grid.n_ta_values.push(n_ta);
        }
        grid.n_ta_values.sort_unstable();
        grid.n_ta_values.dedup();
        grid
    }

    #[test]
    fn table_layout() {
        let grid = grid_for(&[
            ("age", "pca", 500, 768),
            ("gender", "pca", 500, 768),
            ("ope", "pca", 500, 64),
            ("ext", "pca", 500, 64),
            ("ope", "pca", 1000, 64),
            ("ext", "pca", 1000, 128),
            ("age", "pca", 1000, 768),
            ("gender", "pca", 1000, 768),
        ]);
        let families: IndexMap<String, String> = [("age", "demographics"), ("gender", "demographics"), ("ope", "personality"), ("ext", "personality")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let report = build_fkp_table(&grid, &families).unwrap();
        assert_eq!(report.families, ["demographics", "personality"]);
        assert_eq!(report.get("pca", "personality", 500).unwrap().exp_median, 64.0);
        assert_eq!(display_median(report.get("pca", "personality", 1000).unwrap().exp_median), 90);
        assert_eq!(report.get("pca", "demographics", 500).unwrap().exp_median, 768.0);
        assert_eq!(report.to_csv(), "method,n_ta,demographics,personality\npca,500,768,64\npca,1000,768,90\n");
        for row in &report.rows {
            let fk: Vec<usize> = row.tasks.iter().map(|t| t.fkp).collect();
            assert!(row.exp_median >= *fk.iter().min().unwrap() as f64);
            assert!(row.exp_median <= *fk.iter().max().unwrap() as f64);
        }
    }

    #[test]
    fn single_task_family_is_verbatim() {
        let grid = grid_for(&[("age", "nmf", 50, 32), ("age", "nmf", 100, 256)]);
        let families: IndexMap<String, String> = [("age".to_string(), "demo".to_string())].into();
        let report = build_fkp_table(&grid, &families).unwrap();
        assert_eq!(report.get("nmf", "demo", 50).unwrap().exp_median, 32.0);
        assert_eq!(report.get("nmf", "demo", 100).unwrap().exp_median, 256.0);
    }

    #[test]
    fn missing_cells_are_listed() {
        let mut grid = grid_for(&[("age", "pca", 50, 32)]);
        grid.cells.retain(|k, _| k.k != 64);
        let families: IndexMap<String, String> = [("age".to_string(), "demo".to_string())].into();
        match build_fkp_table(&grid, &families) {
            Err(Error::IncompleteGrid { missing }) => assert_eq!(missing, ["age/pca/n_ta=50/k=64"]),
            other => panic!("expected incomplete grid, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn order_invariant_and_monotone_in_threshold(
            means in prop::collection::vec(0.0f64..1.0, 1..8),
            halves in prop::collection::vec(0.0f64..0.2, 8),
            widen in 0.0f64..0.3,
            seed in any::<u64>(),
        ) {
            let ks = [16, 32, 64, 128, 256, 512, 768, 1024];
            let cells: Vec<(usize, f64, f64)> =
                means.iter().enumerate().map(|(i, &m)| (ks[i], m, m - halves[i])).collect();
            let base = first_k_to_peak_by(&cells).unwrap();
            prop_assert_eq!(base, brute_force(&cells));

            let mut shuffled = cells.clone();
            let mut rng = crate::seed::rng(seed);
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            prop_assert_eq!(first_k_to_peak_by(&shuffled).unwrap(), base);

            let wider: Vec<(usize, f64, f64)> = cells.iter().map(|&(k, m, lo)| (k, m, lo - widen)).collect();
            prop_assert!(first_k_to_peak_by(&wider).unwrap() <= base);
        }

        #[test]
        fn median_of_equal_values(k in 1u32..4096, n in 1usize..9) {
            let ks = vec![k as f64; n];
            prop_assert!((exponential_median(&ks).unwrap() - k as f64).abs() < 1e-9 * k as f64);
        }
    }
}
