//! Model file layout, all integers and floats little-endian:
//!
//! ```text
//! magic "HKPM" | version u8 (1)
//! n_layers u32 | n_layers × size u32
//! n_params u64 | n_params × f64      (flat weights, see `Mlp`)
//! n_features u32 | fill f64 × n | min f64 × n | max f64 × n
//! ```
//!
//! Serialization is a pure function of the model, so equal models give equal
//! bytes.

use std::path::Path;

use super::{KeyPredictor, Mlp, Preprocessor};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"HKPM";
pub const MODEL_VERSION: u8 = 1;

impl KeyPredictor {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        let sizes = self.network.sizes();
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for &s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        let params = self.network.params();
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let pre = &self.preprocessor;
        out.extend_from_slice(&(pre.len() as u32).to_le_bytes());
        for v in pre.fill.iter().chain(&pre.min).chain(&pre.max) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Cursor { buf, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Model("bad magic".into()));
        }
        let version = r.take(1)?[0];
        if version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported model version {version}")));
        }
        let n_layers = r.u32()? as usize;
        if n_layers > 64 {
            return Err(Error::Model(format!("implausible layer count {n_layers}")));
        }
        let sizes = (0..n_layers)
            .map(|_| r.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let n_params = r.u64()? as usize;
        let params = r.f64s(n_params)?;
        let network = Mlp::from_parts(sizes, params)?;
        let d = r.u32()? as usize;
        let fill = r.f64s(d)?;
        let min = r.f64s(d)?;
        let max = r.f64s(d)?;
        if r.pos != buf.len() {
            return Err(Error::Model(format!(
                "{} trailing bytes",
                buf.len() - r.pos
            )));
        }
        KeyPredictor::new(Preprocessor { fill, min, max }, network)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Model(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Model("length overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
