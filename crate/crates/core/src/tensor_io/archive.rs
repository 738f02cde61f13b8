//! The FQTA tensor archive.
//!
//! All integers are little-endian:
//!
//! ```text
//! magic    "FQTA"            4 bytes
//! version  u32 = 1
//! count    u32
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   dtype    u8   0 = f64, 1 = i32
//!   ndim     u32  always 2
//!   dims     u64 x ndim
//!   data     rows * cols elements, row-major
//! ```

use std::fs;
use std::path::Path;

use super::matrix::{IntMatrix, Matrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FQTA";
pub const VERSION: u32 = 1;
pub const DTYPE_F64: u8 = 0;
pub const DTYPE_I32: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Tensor {
    F64(Matrix),
    I32(IntMatrix),
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Tensor::F64(m) => (m.rows(), m.cols()),
            Tensor::I32(m) => (m.rows(), m.cols()),
        }
    }
}

/// Ordered collection of uniquely named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    entries: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::DuplicateName(name));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn insert_matrix(&mut self, name: impl Into<String>, m: Matrix) -> Result<()> {
        self.insert(name, Tensor::F64(m))
    }

    pub fn insert_int(&mut self, name: impl Into<String>, m: IntMatrix) -> Result<()> {
        self.insert(name, Tensor::I32(m))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        match self.get(name) {
            Some(Tensor::F64(m)) => Ok(m),
            Some(Tensor::I32(_)) => Err(Error::Recipe(format!("tensor '{name}' is not float64"))),
            None => Err(Error::MissingTensor(name.to_string())),
        }
    }

    pub fn int_matrix(&self, name: &str) -> Result<&IntMatrix> {
        match self.get(name) {
            Some(Tensor::I32(m)) => Ok(m),
            Some(Tensor::F64(_)) => Err(Error::Recipe(format!("tensor '{name}' is not int32"))),
            None => Err(Error::MissingTensor(name.to_string())),
        }
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All float matrices in archive order.
    pub fn matrices(&self) -> Vec<&Matrix> {
        self.entries
            .iter()
            .filter_map(|(_, t)| match t {
                Tensor::F64(m) => Some(m),
                Tensor::I32(_) => None,
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let (rows, cols) = tensor.shape();
            let tag = match tensor {
                Tensor::F64(_) => DTYPE_F64,
                Tensor::I32(_) => DTYPE_I32,
            };
            out.push(tag);
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(rows as u64).to_le_bytes());
            out.extend_from_slice(&(cols as u64).to_le_bytes());
            match tensor {
                Tensor::F64(m) => m.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                Tensor::I32(m) => m.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic").map_err(|_| Error::BadMagic)? != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let count = r.u32("tensor count")?;
        let mut archive = TensorArchive::new();
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::InvalidName)?
                .to_string();
            let tag = r.take(1, "dtype")?[0];
            let ndim = r.u32("ndim")?;
            if ndim != 2 {
                return Err(Error::UnsupportedRank(ndim));
            }
            let rows = r.u64("dims")? as usize;
            let cols = r.u64("dims")? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Truncated(format!("tensor '{name}' dims overflow")))?;
            let tensor = match tag {
                DTYPE_F64 => {
                    let raw = r.take(n.checked_mul(8).unwrap_or(usize::MAX), "f64 data")?;
                    let data: Vec<f64> = raw
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
                        return Err(Error::NonFinite { name, index });
                    }
                    Tensor::F64(Matrix::new(rows, cols, data)?)
                }
                DTYPE_I32 => {
                    let raw = r.take(n.checked_mul(4).unwrap_or(usize::MAX), "i32 data")?;
                    let data = raw
                        .chunks_exact(4)
                        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Tensor::I32(IntMatrix::new(rows, cols, data)?)
                }
                other => return Err(Error::UnknownDtype(other)),
            };
            archive.insert(name, tensor)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Truncated(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - r.pos
            )));
        }
        Ok(archive)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Truncated(format!("reading {what} at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<TensorArchive> {
    TensorArchive::from_bytes(&fs::read(path)?)
}

pub fn write_archive(archive: &TensorArchive, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, archive.to_bytes())?;
    Ok(())
}
