use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;

use super::{EmbeddingTable, Level};

fn format_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub(super) fn load(path: &Path) -> Result<EmbeddingTable> {
    let bytes = fsutil::read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let header = reader.headers().map_err(|e| format_err(path, e))?.clone();
    let has_group = header.get(1) == Some("group");
    let first_dim = if has_group { 2 } else { 1 };
    if header.get(0) != Some("id") {
        return Err(format_err(path, "header must start with `id`"));
    }
    let dims = header.len().saturating_sub(first_dim);
    for (j, name) in header.iter().skip(first_dim).enumerate() {
        if name != format!("d{j}") {
            return Err(format_err(path, format!("expected column d{j}, found {name:?}")));
        }
    }
    if dims == 0 {
        return Err(format_err(path, "no dimension columns"));
    }

    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut data = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e))?;
        if record.len() != header.len() {
            return Err(Error::data_at(
                row,
                format!("{} fields, header has {}", record.len(), header.len()),
            ));
        }
        ids.push(record[0].to_owned());
        if has_group {
            groups.push(record[1].to_owned());
        }
        for cell in record.iter().skip(first_dim) {
            let v: f32 = cell
                .trim()
                .parse()
                .map_err(|_| Error::data_at(row, format!("cannot parse {cell:?} as a number")))?;
            if !v.is_finite() {
                return Err(Error::data_at(row, format!("non-finite value {cell:?}")));
            }
            data.push(v);
        }
    }
    if has_group {
        EmbeddingTable::new(ids, data, dims, Level::Message, Some(groups))
    } else {
        EmbeddingTable::users(ids, data, dims)
    }
}

pub(super) fn save(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    if table.groups().is_some() {
        header.push("group".into());
    }
    header.extend((0..table.dims()).map(|j| format!("d{j}")));
    let err = |e: csv::Error| format_err(path, e);
    writer.write_record(&header).map_err(err)?;
    for i in 0..table.rows() {
        let mut record = vec![table.ids()[i].clone()];
        if let Some(groups) = table.groups() {
            record.push(groups[i].clone());
        }
        record.extend(table.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| format_err(path, e.error()))?;
    fsutil::write_atomic(path, &bytes)
}
