use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fsutil;

use super::{EmbeddingTable, Level};

const MAGIC: &[u8; 4] = b"UEB1";
const HEADER_LEN: usize = 12;

/// `<stem>.<ext>` next to `path`, e.g. `users.ueb` -> `users.ids`.
pub fn sidecar_path(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// Encode a row-major matrix as UEB1 bytes.
pub fn write_ueb1(rows: usize, cols: usize, data: &[f32]) -> Result<Vec<u8>> {
    let (r, c) = (u32_dim(rows)?, u32_dim(cols)?);
    debug_assert_eq!(data.len(), rows * cols);
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&r.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decode UEB1 bytes into `(rows, cols, values)`.
pub fn read_ueb1(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("UEB1 header truncated".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"UEB1\"",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("UEB1 dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "UEB1 payload is {} bytes, header implies {expected} ({rows}x{cols})",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data))
}

fn u32_dim(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")))
}

fn read_lines(path: &Path, expected: usize) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = text.lines().map(str::to_owned).collect();
    if lines.len() != expected {
        return Err(Error::Format(format!(
            "{} has {} lines, matrix has {expected} rows",
            path.display(),
            lines.len()
        )));
    }
    Ok(lines)
}

pub(super) fn load(path: &Path) -> Result<EmbeddingTable> {
    let (rows, cols, data) = read_ueb1(&fsutil::read(path)?)?;
    let ids = read_lines(&sidecar_path(path, "ids"), rows)?;
    let groups_path = sidecar_path(path, "groups");
    let (level, groups) = if groups_path.exists() {
        (Level::Message, Some(read_lines(&groups_path, rows)?))
    } else {
        (Level::User, None)
    };
    EmbeddingTable::new(ids, data, cols, level, groups)
}

fn join_lines(items: &[String]) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(item);
        s.push('\n');
    }
    s
}

pub(super) fn save(table: &EmbeddingTable, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &write_ueb1(table.rows(), table.dims(), table.as_slice())?)?;
    fsutil::write_atomic(&sidecar_path(path, "ids"), join_lines(table.ids()).as_bytes())?;
    let groups_path = sidecar_path(path, "groups");
    match table.groups() {
        Some(groups) => fsutil::write_atomic(&groups_path, join_lines(groups).as_bytes())?,
        None if groups_path.exists() => {
            fs::remove_file(&groups_path).map_err(|e| Error::io(&groups_path, e))?
        }
        None => {}
    }
    Ok(())
}
