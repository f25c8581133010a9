//! EDR reducer files.
//!
//! All integers and floats are little-endian.
//!
//! | field            | encoding                                |
//! |------------------|-----------------------------------------|
//! | magic            | ASCII `EDR` + version digit (`1`)       |
//! | method tag       | `u8`: 0 pca, 1 pca_ppa, 2 nmf, 3 fa, 4 nlae |
//! | in_dims, out_dims| `u32`, `u32`                            |
//! | n_pretrain_rows  | `u64`                                   |
//! | seed             | `u64`                                   |
//! | iterations_run   | `u64`                                   |
//! | final_objective  | `f64`                                   |
//! | clamped          | `u64`                                   |
//! | block count      | `u32`                                   |
//! | blocks           | each: `MAT8`, rows `u32`, cols `u32`, rows*cols `f64` row-major |
//!
//! Blocks use the UEB1 matrix layout with 64-bit elements. Vectors are
//! stored as `1 x n` blocks. Block order per method:
//!
//! * pca: mean, components (`k x d`), singular values
//! * pca_ppa: pre-PPA mean, pre-PPA components (`D1 x d`), PCA mean,
//!   PCA components, PCA singular values, post-PPA mean (`1 x k`),
//!   post-PPA components (`D2 x k`)
//! * nmf: column shift, dictionary (`k x d`)
//! * fa: mean, loadings (`d x k`), noise variances
//! * nlae: W1, b1, W2, b2, V2, c2, V1, c1 (encoder then decoder)

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fsutil;

use super::{
    FaParams, FitMeta, Method, NlaeParams, NmfParams, Params, PcaParams, PcaPpaParams, PpaParams,
    ReducerModel,
};

const MAGIC_PREFIX: &[u8; 3] = b"EDR";
const VERSION: u8 = b'1';
const BLOCK_MAGIC: &[u8; 4] = b"MAT8";

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn matrix(&mut self, m: &DMatrix<f64>) -> Result<()> {
        self.0.extend_from_slice(BLOCK_MAGIC);
        self.u32(m.nrows())?;
        self.u32(m.ncols())?;
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.f64(m[(r, c)]);
            }
        }
        Ok(())
    }

    fn vector(&mut self, v: &DVector<f64>) -> Result<()> {
        self.matrix(&DMatrix::from_row_slice(1, v.len(), v.as_slice()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("reducer file truncated at byte {}", self.bytes.len()))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        if self.take(4)? != BLOCK_MAGIC {
            return Err(Error::Format(format!("expected MAT8 block at byte {}", self.pos - 4)));
        }
        let rows = self.u32()?;
        let cols = self.u32()?;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format("block dimensions overflow".into()))?;
        let raw = self.take(len)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        Ok(DMatrix::from_row_iterator(rows, cols, values))
    }

    fn matrix_shaped(&mut self, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
        let m = self.matrix()?;
        if m.shape() != (rows, cols) {
            return Err(Error::Format(format!(
                "{what} block is {}x{}, expected {rows}x{cols}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }

    fn vector(&mut self, len: usize, what: &str) -> Result<DVector<f64>> {
        let m = self.matrix_shaped(1, len, what)?;
        Ok(DVector::from_row_slice(m.as_slice()))
    }

    fn rows_of_width(&mut self, cols: usize, what: &str) -> Result<DMatrix<f64>> {
        let m = self.matrix()?;
        if m.ncols() != cols {
            return Err(Error::Format(format!("{what} block has {} columns, expected {cols}", m.ncols())));
        }
        Ok(m)
    }
}

fn write_pca(w: &mut Writer, p: &PcaParams) -> Result<()> {
    w.vector(&p.mean)?;
    w.matrix(&p.components)?;
    w.vector(&p.singular_values)
}

fn write_ppa(w: &mut Writer, p: &PpaParams) -> Result<()> {
    w.vector(&p.mean)?;
    w.matrix(&p.top_components)
}

fn read_pca(r: &mut Reader, d: usize, k: usize) -> Result<PcaParams> {
    Ok(PcaParams {
        mean: r.vector(d, "mean")?,
        components: r.matrix_shaped(k, d, "components")?,
        singular_values: r.vector(k, "singular values")?,
    })
}

fn read_ppa(r: &mut Reader, d: usize) -> Result<PpaParams> {
    Ok(PpaParams {
        mean: r.vector(d, "PPA mean")?,
        top_components: r.rows_of_width(d, "PPA components")?,
    })
}

fn block_count(params: &Params) -> usize {
    match params {
        Params::Pca(_) => 3,
        Params::PcaPpa(_) => 7,
        Params::Nmf(_) => 2,
        Params::Fa(_) => 3,
        Params::Nlae(_) => 8,
    }
}

pub fn reducer_to_bytes(model: &ReducerModel) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC_PREFIX);
    w.0.push(VERSION);
    w.0.push(model.method.tag());
    w.u32(model.in_dims)?;
    w.u32(model.out_dims)?;
    let meta = &model.fit_meta;
    w.u64(meta.n_pretrain_rows);
    w.u64(meta.seed);
    w.u64(meta.iterations_run);
    w.f64(meta.final_objective);
    w.u64(meta.clamped);
    w.u32(block_count(&model.params))?;
    match &model.params {
        Params::Pca(p) => write_pca(&mut w, p)?,
        Params::PcaPpa(p) => {
            write_ppa(&mut w, &p.pre)?;
            write_pca(&mut w, &p.pca)?;
            write_ppa(&mut w, &p.post)?;
        }
        Params::Nmf(p) => {
            w.vector(&p.column_shift)?;
            w.matrix(&p.dictionary)?;
        }
        Params::Fa(p) => {
            w.vector(&p.mean)?;
            w.matrix(&p.loadings)?;
            w.vector(&p.noise)?;
        }
        Params::Nlae(p) => {
            for part in p.parts() {
                w.matrix(part)?;
            }
        }
    }
    Ok(w.0)
}

pub fn reducer_from_bytes(bytes: &[u8]) -> Result<ReducerModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if &magic[..3] != MAGIC_PREFIX {
        return Err(Error::Format("not a reducer file (missing EDR magic)".into()));
    }
    if magic[3] != VERSION {
        return Err(Error::Format(format!(
            "unsupported reducer format version {:?} (this build reads version 1)",
            magic[3] as char
        )));
    }
    let tag = r.u8()?;
    let method = Method::from_tag(tag)
        .ok_or_else(|| Error::Format(format!("unknown method tag {tag}")))?;
    let d = r.u32()?;
    let k = r.u32()?;
    if k == 0 || d == 0 || k > d {
        return Err(Error::Format(format!("invalid dims {d} -> {k}")));
    }
    let fit_meta = FitMeta {
        n_pretrain_rows: r.u64()?,
        seed: r.u64()?,
        iterations_run: r.u64()?,
        final_objective: r.f64()?,
        clamped: r.u64()?,
    };
    let blocks = r.u32()?;
    let params = match method {
        Method::Pca => Params::Pca(read_pca(&mut r, d, k)?),
        Method::PcaPpa => Params::PcaPpa(PcaPpaParams {
            pre: read_ppa(&mut r, d)?,
            pca: read_pca(&mut r, d, k)?,
            post: read_ppa(&mut r, k)?,
        }),
        Method::Nmf => Params::Nmf(NmfParams {
            column_shift: r.vector(d, "column shift")?,
            dictionary: r.matrix_shaped(k, d, "dictionary")?,
        }),
        Method::Fa => Params::Fa(FaParams {
            mean: r.vector(d, "mean")?,
            loadings: r.matrix_shaped(d, k, "loadings")?,
            noise: r.vector(d, "noise")?,
        }),
        Method::Nlae => {
            let h = super::nlae::hidden_width(d, k);
            Params::Nlae(NlaeParams {
                enc_w1: r.matrix_shaped(d, h, "W1")?,
                enc_b1: r.matrix_shaped(1, h, "b1")?,
                enc_w2: r.matrix_shaped(h, k, "W2")?,
                enc_b2: r.matrix_shaped(1, k, "b2")?,
                dec_w2: r.matrix_shaped(k, h, "decoder W2")?,
                dec_b2: r.matrix_shaped(1, h, "decoder b2")?,
                dec_w1: r.matrix_shaped(h, d, "decoder W1")?,
                dec_b1: r.matrix_shaped(1, d, "decoder b1")?,
            })
        }
    };
    if blocks != block_count(&params) {
        return Err(Error::Format(format!("block count {blocks} does not match method {method}")));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(ReducerModel { method, in_dims: d, out_dims: k, params, fit_meta, trace: Vec::new() })
}

pub fn save_reducer(model: &ReducerModel, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &reducer_to_bytes(model)?)
}

pub fn load_reducer(path: &Path) -> Result<ReducerModel> {
    reducer_from_bytes(&fsutil::read(path)?)
}
