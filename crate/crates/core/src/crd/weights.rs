//! Binary weight container.
//!
//! Layout, little endian:
//! `b"CRDNET\0\0"`, version `u32`, entry count `u32`, then per entry a
//! `u16` name length, UTF-8 name, `u32` rows, `u32` cols and `rows * cols`
//! row-major `f64` values.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::network::{Dense, FeatureNorm, LayerId, NetworkParams, FEATURE_DIM};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CRDNET\0\0";
pub const VERSION: u32 = 1;

struct Entry {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn entries(params: &NetworkParams) -> Vec<Entry> {
    let mut out = Vec::new();
    for id in LayerId::ALL {
        let l = params.layer(id);
        out.push(Entry {
            name: format!("{}.weight", id.name()),
            rows: l.weight.nrows(),
            cols: l.weight.ncols(),
            data: row_major(&l.weight),
        });
        out.push(Entry {
            name: format!("{}.bias", id.name()),
            rows: l.bias.len(),
            cols: 1,
            data: l.bias.as_slice().to_vec(),
        });
    }
    out.push(Entry { name: "norm.mean".into(), rows: 1, cols: FEATURE_DIM, data: params.norm.mean.to_vec() });
    out.push(Entry { name: "norm.std".into(), rows: 1, cols: FEATURE_DIM, data: params.norm.std.to_vec() });
    out.push(Entry { name: "norm.force_scale".into(), rows: 1, cols: 1, data: vec![params.norm.force_scale] });
    out
}

pub fn encode_weights(params: &NetworkParams) -> Vec<u8> {
    let entries = entries(params);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        buf.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(e.name.as_bytes());
        buf.extend_from_slice(&(e.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(e.cols as u32).to_le_bytes());
        for v in e.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn save_weights(params: &NetworkParams, path: &Path) -> Result<()> {
    fs::write(path, encode_weights(params))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.buf.len() {
            return Err(format!("truncated payload at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn parse_entries(buf: &[u8]) -> std::result::Result<Vec<Entry>, String> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err("bad magic, not a CRD weight file".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "entry name is not UTF-8".to_string())?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let data = (0..rows * cols).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
        out.push(Entry { name, rows, cols, data });
    }
    if r.pos != buf.len() {
        return Err(format!("{} trailing bytes", buf.len() - r.pos));
    }
    Ok(out)
}

pub fn decode_weights(buf: &[u8], path: &Path) -> Result<NetworkParams> {
    let fail = |reason: String| Error::WeightFormat { path: path.to_path_buf(), reason };
    let entries = parse_entries(buf).map_err(fail)?;
    let find = |name: &str| {
        entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::WeightFormat { path: path.to_path_buf(), reason: format!("missing entry {name}") })
    };
    let check = |e: &Entry, expected: (usize, usize)| {
        if (e.rows, e.cols) != expected {
            Err(Error::ShapeMismatch { name: e.name.clone(), expected, found: (e.rows, e.cols) })
        } else {
            Ok(())
        }
    };

    let mut params = NetworkParams::zeros();
    for id in LayerId::ALL {
        let (rows, cols) = id.shape();
        let w = find(&format!("{}.weight", id.name()))?;
        check(w, (rows, cols))?;
        let b = find(&format!("{}.bias", id.name()))?;
        check(b, (rows, 1))?;
        *params.layer_mut(id) = Dense {
            weight: DMatrix::from_row_slice(rows, cols, &w.data),
            bias: DVector::from_column_slice(&b.data),
        };
    }
    let mean = find("norm.mean")?;
    check(mean, (1, FEATURE_DIM))?;
    let std = find("norm.std")?;
    check(std, (1, FEATURE_DIM))?;
    let scale = find("norm.force_scale")?;
    check(scale, (1, 1))?;
    params.norm = FeatureNorm {
        mean: mean.data.clone().try_into().expect("checked length"),
        std: std.data.clone().try_into().expect("checked length"),
        force_scale: scale.data[0],
    };
    params.validate()?;
    Ok(params)
}

pub fn load_weights(path: &Path) -> Result<NetworkParams> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_weights(&fs::read(path)?, path)
}
