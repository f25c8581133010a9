//! Embedding and outcome tables and their on-disk formats.
//!
//! Two embedding formats are supported:
//!
//! * **UEB1** binary: bytes 0..4 are the ASCII magic `UEB1`, bytes 4..8 the
//!   row count (`u32` LE), bytes 8..12 the column count (`u32` LE), followed
//!   by `rows * cols` little-endian `f32` values in row-major order. Ids live
//!   in a sidecar `<stem>.ids` (one per line, UTF-8, LF) and message-level
//!   tables carry their user keys in `<stem>.groups` with the same shape.
//! * **CSV**: header `id[,group],d0,d1,...` followed by one row per record.
//!
//! Outcomes are a CSV with header `user_id,value`.

mod binary;
mod csv_format;
mod outcomes;

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binary::{read_ueb1, sidecar_path, write_ueb1};
pub use outcomes::{load_outcomes, save_outcomes, OutcomeKind, OutcomeTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Message,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    Csv,
}

impl EmbeddingFormat {
    /// `.csv` selects CSV, anything else the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EmbeddingFormat::Csv,
            _ => EmbeddingFormat::Binary,
        }
    }
}

/// Record ids paired with a dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    ids: Vec<String>,
    data: Vec<f32>,
    dims: usize,
    level: Level,
    groups: Option<Vec<String>>,
}

impl EmbeddingTable {
    /// Validating constructor. `groups` is required for message-level tables
    /// and ignored (must be `None`) for user-level ones.
    pub fn new(
        ids: Vec<String>,
        data: Vec<f32>,
        dims: usize,
        level: Level,
        groups: Option<Vec<String>>,
    ) -> Result<Self> {
        if dims == 0 {
            return Err(Error::data("embedding tables need at least one dimension"));
        }
        if data.len() != ids.len() * dims {
            return Err(Error::shape(
                format!("{} values ({} rows x {dims})", ids.len() * dims, ids.len()),
                format!("{} values", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data_at(pos / dims, "non-finite embedding value"));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::data_at(row, format!("duplicate id {id:?}")));
            }
        }
        match (level, &groups) {
            (Level::Message, None) => {
                return Err(Error::data("message-level table without group keys"))
            }
            (Level::Message, Some(g)) => {
                if g.len() != ids.len() {
                    return Err(Error::shape(format!("{} group keys", ids.len()), g.len()));
                }
                if let Some(row) = g.iter().position(|k| k.is_empty()) {
                    return Err(Error::data_at(row, "empty group key"));
                }
            }
            (Level::User, Some(_)) => {
                return Err(Error::data("user-level tables do not carry group keys"))
            }
            (Level::User, None) => {}
        }
        Ok(EmbeddingTable {
            ids,
            data,
            dims,
            level,
            groups,
        })
    }

    pub fn users(ids: Vec<String>, data: Vec<f32>, dims: usize) -> Result<Self> {
        Self::new(ids, data, dims, Level::User, None)
    }

    /// User-level table from a 64-bit matrix, rounding each value once.
    pub fn from_matrix(ids: Vec<String>, matrix: &DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != ids.len() {
            return Err(Error::shape(format!("{} rows", ids.len()), matrix.nrows()));
        }
        let dims = matrix.ncols();
        let mut data = Vec::with_capacity(ids.len() * dims);
        for r in 0..matrix.nrows() {
            data.extend(matrix.row(r).iter().map(|&v| v as f32));
        }
        Self::users(ids, data, dims)
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn groups(&self) -> Option<&[String]> {
        self.groups.as_deref()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    /// Copy into a 64-bit matrix (rows x dims).
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows(), self.dims, self.data.iter().map(|&v| v as f64))
    }

    /// Rows at `indices`, in that order. Indices must be distinct.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        let mut data = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let groups = self
            .groups
            .as_ref()
            .map(|g| indices.iter().map(|&i| g[i].clone()).collect());
        Self::new(ids, data, self.dims, self.level, groups)
    }
}

pub fn load_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingTable> {
    match format {
        EmbeddingFormat::Binary => binary::load(path),
        EmbeddingFormat::Csv => csv_format::load(path),
    }
}

pub fn save_embeddings(table: &EmbeddingTable, path: &Path, format: EmbeddingFormat) -> Result<()> {
    match format {
        EmbeddingFormat::Binary => binary::save(table, path),
        EmbeddingFormat::Csv => csv_format::save(table, path),
    }
}

/// Result of [`align`]: both sides restricted to the shared ids, in the
/// feature table's order.
#[derive(Debug, Clone)]
pub struct Aligned {
    pub features: EmbeddingTable,
    pub outcomes: OutcomeTable,
    pub dropped_features: usize,
    pub dropped_outcomes: usize,
}

pub fn align(features: &EmbeddingTable, outcomes: &OutcomeTable) -> Result<Aligned> {
    if features.level() != Level::User {
        return Err(Error::Alignment("only user-level features can be aligned".into()));
    }
    let keep: Vec<usize> = (0..features.rows())
        .filter(|&i| outcomes.get(&features.ids()[i]).is_some())
        .collect();
    if keep.is_empty() {
        return Err(Error::Alignment(
            "feature and outcome tables share no ids".into(),
        ));
    }
    let aligned_features = features.select(&keep)?;
    let aligned_outcomes = outcomes.restrict(aligned_features.ids())?;
    Ok(Aligned {
        dropped_features: features.rows() - keep.len(),
        dropped_outcomes: outcomes.len() - keep.len(),
        features: aligned_features,
        outcomes: aligned_outcomes,
    })
}

/// Aligned train/test split for one prediction task.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task_name: String,
    pub train_features: EmbeddingTable,
    pub train_outcomes: OutcomeTable,
    pub test_features: EmbeddingTable,
    pub test_outcomes: OutcomeTable,
}

impl TaskDataset {
    /// Aligns both splits and checks dims and id disjointness.
    pub fn new(
        task_name: impl Into<String>,
        train_features: &EmbeddingTable,
        train_outcomes: &OutcomeTable,
        test_features: &EmbeddingTable,
        test_outcomes: &OutcomeTable,
    ) -> Result<Self> {
        if train_outcomes.kind() != test_outcomes.kind() {
            return Err(Error::data("train and test outcome kinds differ"));
        }
        if train_features.dims() != test_features.dims() {
            return Err(Error::shape(
                format!("test dims {}", train_features.dims()),
                test_features.dims(),
            ));
        }
        let train = align(train_features, train_outcomes)?;
        let test = align(test_features, test_outcomes)?;
        let train_ids: HashSet<&str> = train.features.ids().iter().map(String::as_str).collect();
        if let Some(id) = test.features.ids().iter().find(|id| train_ids.contains(id.as_str())) {
            return Err(Error::data(format!("id {id:?} appears in both train and test")));
        }
        Ok(TaskDataset {
            task_name: task_name.into(),
            train_features: train.features,
            train_outcomes: train.outcomes,
            test_features: test.features,
            test_outcomes: test.outcomes,
        })
    }

    pub fn kind(&self) -> OutcomeKind {
        self.train_outcomes.kind()
    }

    pub fn train_targets(&self) -> Vec<f64> {
        self.train_outcomes.values().collect()
    }

    pub fn test_targets(&self) -> Vec<f64> {
        self.test_outcomes.values().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn users(ids: &[&str], dims: usize, data: Vec<f32>) -> EmbeddingTable {
        EmbeddingTable::users(ids.iter().map(|s| s.to_string()).collect(), data, dims).unwrap()
    }

    fn outcomes(pairs: &[(&str, f64)]) -> OutcomeTable {
        OutcomeTable::new(
            pairs.iter().map(|(k, v)| (k.to_string(), *v)),
            OutcomeKind::Continuous,
        )
        .unwrap()
    }

    #[test]
    fn rejects_duplicates_and_nan() {
        let dup = EmbeddingTable::users(vec!["a".into(), "a".into()], vec![0.0; 4], 2);
        assert!(matches!(dup, Err(Error::Data { row: Some(1), .. })));
        let nan = EmbeddingTable::users(vec!["a".into(), "b".into()], vec![0.0, 0.0, f32::NAN, 1.0], 2);
        assert!(matches!(nan, Err(Error::Data { row: Some(1), .. })));
    }

    #[test]
    fn message_level_requires_groups() {
        let r = EmbeddingTable::new(vec!["m".into()], vec![1.0], 1, Level::Message, None);
        assert!(r.is_err());
        let r = EmbeddingTable::new(vec!["m".into()], vec![1.0], 1, Level::Message, Some(vec!["".into()]));
        assert!(r.is_err());
    }

    #[test]
    fn align_keeps_feature_order() {
        let f = users(&["u1", "u2", "u3"], 1, vec![1.0, 2.0, 3.0]);
        let o = outcomes(&[("u4", 0.0), ("u3", 3.5), ("u2", 2.5)]);
        let a = align(&f, &o).unwrap();
        assert_eq!(a.features.ids(), ["u2", "u3"]);
        assert_eq!(a.outcomes.ids().collect::<Vec<_>>(), ["u2", "u3"]);
        assert_eq!(a.features.as_slice(), [2.0, 3.0]);
        assert_eq!((a.dropped_features, a.dropped_outcomes), (1, 1));
    }

    #[test]
    fn align_identity_and_disjoint() {
        let f = users(&["u1", "u2"], 1, vec![1.0, 2.0]);
        let o = outcomes(&[("u1", 1.0), ("u2", 2.0)]);
        let a = align(&f, &o).unwrap();
        assert_eq!(a.features, f);
        assert_eq!((a.dropped_features, a.dropped_outcomes), (0, 0));

        let o = outcomes(&[("x", 1.0)]);
        assert!(matches!(align(&f, &o), Err(Error::Alignment(_))));
    }

    #[test]
    fn align_is_idempotent() {
        let f = users(&["c", "a", "b", "d"], 2, (0..8).map(|v| v as f32).collect());
        let o = outcomes(&[("b", 1.0), ("z", 0.0), ("c", 2.0)]);
        let once = align(&f, &o).unwrap();
        let twice = align(&once.features, &once.outcomes).unwrap();
        assert_eq!(once.features, twice.features);
        assert_eq!(once.outcomes, twice.outcomes);
    }

    #[test]
    fn task_dataset_rejects_overlap() {
        let tr = users(&["a", "b"], 1, vec![0.0, 1.0]);
        let te = users(&["b", "c"], 1, vec![0.0, 1.0]);
        let o = outcomes(&[("a", 1.0), ("b", 2.0), ("c", 3.0)]);
        assert!(TaskDataset::new("t", &tr, &o, &te, &o).is_err());
    }
}
