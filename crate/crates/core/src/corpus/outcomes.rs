use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Continuous,
    Binary,
    /// Four ordered risk levels encoded 0..=3.
    Multiclass4,
}

impl OutcomeKind {
    /// Number of classes for classification kinds.
    pub fn n_classes(self) -> Option<usize> {
        match self {
            OutcomeKind::Continuous => None,
            OutcomeKind::Binary => Some(2),
            OutcomeKind::Multiclass4 => Some(4),
        }
    }

    fn check(self, v: f64) -> std::result::Result<(), String> {
        if !v.is_finite() {
            return Err(format!("non-finite outcome {v}"));
        }
        if let Some(n) = self.n_classes() {
            if v.fract() != 0.0 || v < 0.0 || v >= n as f64 {
                return Err(format!("{v} is not a label in 0..{n}"));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for OutcomeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(OutcomeKind::Continuous),
            "binary" => Ok(OutcomeKind::Binary),
            "multiclass4" => Ok(OutcomeKind::Multiclass4),
            _ => Err(Error::Config(format!("unknown outcome kind {s:?}"))),
        }
    }
}

/// User id to outcome value, in load order.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    entries: IndexMap<String, f64>,
    kind: OutcomeKind,
}

impl OutcomeTable {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>, kind: OutcomeKind) -> Result<Self> {
        let mut map = IndexMap::new();
        for (row, (id, v)) in entries.into_iter().enumerate() {
            kind.check(v).map_err(|m| Error::data_at(row, m))?;
            if map.insert(id.clone(), v).is_some() {
                return Err(Error::data_at(row, format!("duplicate user id {id:?}")));
            }
        }
        Ok(OutcomeTable { entries: map, kind })
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.values().copied()
    }

    /// Entries for `ids`, in that order. Every id must be present.
    pub fn restrict(&self, ids: &[String]) -> Result<Self> {
        let entries = ids
            .iter()
            .map(|id| {
                self.get(id)
                    .map(|v| (id.clone(), v))
                    .ok_or_else(|| Error::Alignment(format!("no outcome for {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries, self.kind)
    }
}

pub fn load_outcomes(path: &Path, kind: OutcomeKind) -> Result<OutcomeTable> {
    let bytes = fsutil::read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if header.iter().collect::<Vec<_>>() != ["user_id", "value"] {
        return Err(Error::Format(format!(
            "{}: expected header `user_id,value`",
            path.display()
        )));
    }
    let mut entries = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let id = record.get(0).unwrap_or_default().to_owned();
        let cell = record.get(1).map(str::trim).unwrap_or_default();
        if id.is_empty() || cell.is_empty() {
            return Err(Error::data_at(row, "missing user id or value"));
        }
        let v: f64 = cell
            .parse()
            .map_err(|_| Error::data_at(row, format!("cannot parse {cell:?} as a number")))?;
        entries.push((id, v));
    }
    OutcomeTable::new(entries, kind)
}

pub fn save_outcomes(table: &OutcomeTable, path: &Path) -> Result<()> {
    let mut out = String::from("user_id,value\n");
    for (id, v) in &table.entries {
        out.push_str(&format!("{id},{v}\n"));
    }
    fsutil::write_atomic(path, out.as_bytes())
}
