//! `params.bin` layout (all integers u64 little-endian unless noted):
//!
//! ```text
//! magic    4 bytes  "EPMD"
//! version  u32
//! d        u64
//! types    u64
//! per type:
//!   id_len u64, id bytes (UTF-8)
//!   domain_dim u64, d u64, W1 as domain_dim*d f64 row-major
//!   nodes u64, W2 as nodes*d f64 row-major
//! ```

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{EncoderParams, TypeInputs, TypeParams};
use crate::error::{Error, Result};
use crate::util;

pub const PARAMS_MAGIC: &[u8; 4] = b"EPMD";
pub const PARAMS_VERSION: u32 = 1;

fn put_u64(buf: &mut Vec<u8>, x: u64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &Array2<f64>) {
    for x in m.iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn params_to_bytes(params: &EncoderParams) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    put_u64(&mut buf, params.dim as u64);
    put_u64(&mut buf, params.types.len() as u64);
    for t in &params.types {
        put_u64(&mut buf, t.type_id.len() as u64);
        buf.extend_from_slice(t.type_id.as_bytes());
        put_u64(&mut buf, t.w1.nrows() as u64);
        put_u64(&mut buf, params.dim as u64);
        put_matrix(&mut buf, &t.w1);
        put_u64(&mut buf, t.w2.nrows() as u64);
        put_matrix(&mut buf, &t.w2);
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, "truncated parameter file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let b: [u8; 8] = self.take(8)?.try_into().expect("8 bytes");
        usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::format(self.path, "size overflow"))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let len = rows
            .checked_mul(cols)
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(|| Error::format(self.path, "matrix size overflow"))?;
        let raw = self.take(len)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape matches length"))
    }
}

pub fn params_from_bytes(bytes: &[u8], path: &Path) -> Result<EncoderParams> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != PARAMS_MAGIC {
        return Err(Error::format(path, "not an EP-md parameter file"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != PARAMS_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let dim = r.u64()?;
    let ntypes = r.u64()?;
    let mut types = Vec::with_capacity(ntypes.min(1024));
    for _ in 0..ntypes {
        let len = r.u64()?;
        let type_id = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::format(path, "type id is not UTF-8"))?;
        let domain = r.u64()?;
        let d = r.u64()?;
        if d != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: d });
        }
        let w1 = r.matrix(domain, d)?;
        let nodes = r.u64()?;
        let w2 = r.matrix(nodes, d)?;
        types.push(TypeParams { type_id, w1, w2 });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after parameters"));
    }
    Ok(EncoderParams { dim, types })
}

pub fn save_params(params: &EncoderParams, path: &Path) -> Result<()> {
    let mut w = util::create(path)?;
    w.write_all(&params_to_bytes(params))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<EncoderParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_bytes(&bytes, path)
}

/// Writes `<dir>/<type_id>/embeddings.csv` with header `episode_id,e0..e{d-1}`.
pub fn write_embeddings(dir: &Path, ids: &[String], inputs: &[TypeInputs], params: &EncoderParams) -> Result<()> {
    let h = super::encode_all(inputs, params)?;
    for (tp, m) in params.types.iter().zip(&h) {
        if m.nrows() != ids.len() {
            return Err(Error::IdMisalignment(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                m.nrows()
            )));
        }
        let path = dir.join(&tp.type_id).join("embeddings.csv");
        util::create_dir_all(path.parent().expect("has parent"))?;
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["episode_id".to_string()];
        header.extend((0..params.dim).map(|j| format!("e{j}")));
        w.write_record(&header)?;
        for (id, row) in ids.iter().zip(m.rows()) {
            w.write_record(std::iter::once(id.clone()).chain(row.iter().map(|x| x.to_string())))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
