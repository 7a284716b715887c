//! Tensor archives: a one-line JSON header followed by raw little-endian
//! values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &str = "STLAB1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    magic: String,
    dtype: DType,
    shape: Vec<usize>,
    order: String,
    count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArchiveData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// `count` records of shape `shape`, stored back to back.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorArchive {
    pub shape: Vec<usize>,
    pub data: ArchiveData,
}

impl TensorArchive {
    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::checked(shape, ArchiveData::F32(data))
    }

    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::checked(shape, ArchiveData::F64(data))
    }

    fn checked(shape: Vec<usize>, data: ArchiveData) -> Result<Self> {
        let a = TensorArchive { shape, data };
        let rec = a.record_len();
        if rec == 0 || a.len() % rec != 0 {
            return Err(Error::shape(format!(
                "{} values are not a whole number of {:?} records",
                a.len(),
                a.shape
            )));
        }
        Ok(a)
    }

    fn len(&self) -> usize {
        match &self.data {
            ArchiveData::F32(v) => v.len(),
            ArchiveData::F64(v) => v.len(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            ArchiveData::F32(_) => DType::F32,
            ArchiveData::F64(_) => DType::F64,
        }
    }

    pub fn record_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn count(&self) -> usize {
        self.len() / self.record_len()
    }

    /// Values as `f32`, converting if stored wider.
    pub fn to_f32(&self) -> Vec<f32> {
        match &self.data {
            ArchiveData::F32(v) => v.clone(),
            ArchiveData::F64(v) => v.iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            magic: MAGIC.into(),
            dtype: self.dtype(),
            shape: self.shape.clone(),
            order: "row-major".into(),
            count: self.count(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        match &self.data {
            ArchiveData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArchiveData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Data("archive header is not terminated".into()))?;
        let header: Header =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Data(format!("bad archive header: {e}")))?;
        if header.magic != MAGIC || header.order != "row-major" {
            return Err(Error::Data(format!("not a {MAGIC} row-major archive")));
        }
        let payload = &bytes[nl + 1..];
        let values = header.count * header.shape.iter().product::<usize>();
        if payload.len() != values * header.dtype.size() {
            return Err(Error::Data(format!(
                "archive payload has {} bytes, header promises {}",
                payload.len(),
                values * header.dtype.size()
            )));
        }
        let data = match header.dtype {
            DType::F32 => ArchiveData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => ArchiveData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Self::checked(header.shape, data)
    }

    pub fn write(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
