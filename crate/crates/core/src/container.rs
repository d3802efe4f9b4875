//! The `HAMW` named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HAMW"  u32 entry_count
//! repeated entry_count times:
//!     u16 name_len, name (UTF-8), u8 rank, u32 dims[rank], f64 payload[prod(dims)]
//! ```
//!
//! Entries are written in name order, so equal stores serialize to equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Mat;

pub const MAGIC: &[u8; 4] = b"HAMW";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub dims: Vec<u32>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn from_mat(m: &Mat) -> Self {
        Self {
            dims: vec![m.rows() as u32, m.cols() as u32],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn from_vector(v: &[f64]) -> Self {
        Self {
            dims: vec![v.len() as u32],
            data: v.to_vec(),
        }
    }

    pub fn to_mat(&self) -> Result<Mat> {
        match self.dims.as_slice() {
            [r, c] => Mat::from_vec(*r as usize, *c as usize, self.data.clone()),
            [n] => Mat::from_vec(1, *n as usize, self.data.clone()),
            dims => Err(shape_err("NamedTensor::to_mat", format!("rank {}", dims.len()))),
        }
    }
}

/// An ordered map of parameter name to tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorStore {
    entries: BTreeMap<String, NamedTensor>,
}

impl TensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: NamedTensor) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn insert_mat(&mut self, name: impl Into<String>, m: &Mat) {
        self.insert(name, NamedTensor::from_mat(m));
    }

    pub fn insert_vector(&mut self, name: impl Into<String>, v: &[f64]) {
        self.insert(name, NamedTensor::from_vector(v));
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.entries.get(name)
    }

    pub fn mat(&self, name: &str) -> Result<Mat> {
        self.get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_owned()))?
            .to_mat()
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        let t = self
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_owned()))?;
        if t.dims.len() != 1 {
            return Err(shape_err(
                "TensorStore::vector",
                format!("`{name}` has rank {}", t.dims.len()),
            ));
        }
        Ok(t.data.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims.len() as u8);
            for d in &t.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: format!("bad magic {magic:?}, expected \"HAMW\""),
            });
        }
        let count = r.u32()?;
        let mut store = TensorStore::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let at = r.offset();
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| Error::Format {
                    offset: at,
                    msg: format!("entry name is not UTF-8: {e}"),
                })?
                .to_owned();
            let rank = r.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()?);
            }
            let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
            let len = len.ok_or_else(|| Error::Format {
                offset: r.offset(),
                msg: "tensor size overflows".into(),
            })?;
            let mut data = Vec::with_capacity(len.min(bytes.len() / 8));
            for _ in 0..len {
                data.push(r.f64()?);
            }
            store.insert(name, NamedTensor { dims, data });
        }
        if r.offset() != bytes.len() {
            return Err(Error::Format {
                offset: r.offset(),
                msg: "trailing bytes after last entry".into(),
            });
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Little-endian cursor that reports the byte offset of any short read.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos,
                msg: format!(
                    "truncated: needed {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            }),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}
