//! Named-tensor container used for feature sets, checkpoints and predicted
//! mel-spectrograms.
//!
//! Byte layout:
//!
//! ```text
//! [u64 LE: header length N][N bytes: UTF-8 JSON header][raw little-endian array bytes]
//! ```
//!
//! The header lists every tensor as `{name, dtype, shape, offset, nbytes}` with
//! offsets relative to the start of the data section, plus a configuration
//! fingerprint and free-form JSON metadata.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{DType, Mat, Real};

pub const FORMAT_NAME: &str = "timbre-tensors";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt container header: {0}")]
    CorruptHeader(String),
    #[error("container truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("tensor `{0}` not found in container")]
    MissingTensor(String),
    #[error("tensor `{name}` has dtype {found:?}, expected {expected:?}")]
    DtypeMismatch { name: String, expected: DType, found: DType },
    #[error("tensor `{name}` has shape {found:?}, expected {expected}")]
    ShapeMismatch { name: String, expected: String, found: Vec<usize> },
    #[error("configuration fingerprint mismatch: container has {found}, expected {expected}")]
    FingerprintMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::I32(_) => DType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    offset: usize,
    nbytes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    fingerprint: String,
    #[serde(default)]
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub fingerprint: String,
    pub metadata: serde_json::Value,
    tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        Container {
            fingerprint: fingerprint.into(),
            metadata: serde_json::Value::Object(Default::default()),
            tensors: Vec::new(),
        }
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: TensorData) {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor `{name}` shape/data mismatch");
        self.tensors.retain(|t| t.name != name);
        self.tensors.push(NamedTensor { name, shape, data });
    }

    pub fn push_mat<T: Real>(&mut self, name: impl Into<String>, m: &Mat<T>) {
        let data = match T::DTYPE {
            DType::F32 => TensorData::F32(m.data.iter().map(|x| x.as_f64() as f32).collect()),
            DType::F64 => TensorData::F64(m.data.iter().map(|x| x.as_f64()).collect()),
            DType::I32 => unreachable!("Real is never integer"),
        };
        self.push(name, vec![m.rows, m.cols], data);
    }

    pub fn push_i32(&mut self, name: impl Into<String>, values: Vec<i32>) {
        let n = values.len();
        self.push(name, vec![n], TensorData::I32(values));
    }

    pub fn push_f32(&mut self, name: impl Into<String>, values: Vec<f32>) {
        let n = values.len();
        self.push(name, vec![n], TensorData::F32(values));
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor, ContainerError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ContainerError::MissingTensor(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.name == name)
    }

    /// Reads a rank-2 tensor stored with the same dtype as `T`.
    pub fn get_mat<T: Real>(&self, name: &str) -> Result<Mat<T>, ContainerError> {
        let t = self.get(name)?;
        if t.shape.len() != 2 {
            return Err(ContainerError::ShapeMismatch {
                name: name.into(),
                expected: "rank 2".into(),
                found: t.shape.clone(),
            });
        }
        let data: Vec<T> = match (&t.data, T::DTYPE) {
            (TensorData::F32(v), DType::F32) => v.iter().map(|&x| T::from_f64_lossy(x as f64)).collect(),
            (TensorData::F64(v), DType::F64) => v.iter().map(|&x| T::from_f64_lossy(x)).collect(),
            (d, expected) => {
                return Err(ContainerError::DtypeMismatch { name: name.into(), expected, found: d.dtype() })
            }
        };
        Ok(Mat::from_vec(t.shape[0], t.shape[1], data))
    }

    pub fn get_i32(&self, name: &str) -> Result<&[i32], ContainerError> {
        match &self.get(name)?.data {
            TensorData::I32(v) => Ok(v),
            d => Err(ContainerError::DtypeMismatch { name: name.into(), expected: DType::I32, found: d.dtype() }),
        }
    }

    pub fn get_f32(&self, name: &str) -> Result<&[f32], ContainerError> {
        match &self.get(name)?.data {
            TensorData::F32(v) => Ok(v),
            d => Err(ContainerError::DtypeMismatch { name: name.into(), expected: DType::F32, found: d.dtype() }),
        }
    }

    pub fn get_f64(&self, name: &str) -> Result<&[f64], ContainerError> {
        match &self.get(name)?.data {
            TensorData::F64(v) => Ok(v),
            d => Err(ContainerError::DtypeMismatch { name: name.into(), expected: DType::F64, found: d.dtype() }),
        }
    }

    pub fn check_fingerprint(&self, expected: &str) -> Result<(), ContainerError> {
        if self.fingerprint == expected {
            Ok(())
        } else {
            Err(ContainerError::FingerprintMismatch { expected: expected.into(), found: self.fingerprint.clone() })
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let offset = body.len();
            match &t.data {
                TensorData::F32(v) => v.iter().for_each(|x| body.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v.iter().for_each(|x| body.extend_from_slice(&x.to_le_bytes())),
                TensorData::I32(v) => v.iter().for_each(|x| body.extend_from_slice(&x.to_le_bytes())),
            }
            entries.push(TensorEntry {
                name: t.name.clone(),
                dtype: t.data.dtype(),
                shape: t.shape.clone(),
                offset,
                nbytes: body.len() - offset,
            });
        }
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            fingerprint: self.fingerprint.clone(),
            metadata: self.metadata.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + body.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < 8 {
            return Err(ContainerError::Truncated { needed: 8, available: bytes.len() });
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let body_start = 8usize
            .checked_add(hlen)
            .ok_or_else(|| ContainerError::CorruptHeader("header length overflows".into()))?;
        if bytes.len() < body_start {
            return Err(ContainerError::Truncated { needed: body_start, available: bytes.len() });
        }
        let header: Header = serde_json::from_slice(&bytes[8..body_start])
            .map_err(|e| ContainerError::CorruptHeader(e.to_string()))?;
        if header.format != FORMAT_NAME {
            return Err(ContainerError::CorruptHeader(format!("unknown format `{}`", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(ContainerError::CorruptHeader(format!("unsupported version {}", header.version)));
        }
        let body = &bytes[body_start..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let count: usize = e.shape.iter().product();
            if count * e.dtype.size() != e.nbytes {
                return Err(ContainerError::CorruptHeader(format!(
                    "tensor `{}`: shape {:?} does not match {} bytes",
                    e.name, e.shape, e.nbytes
                )));
            }
            let end = e.offset + e.nbytes;
            if end > body.len() {
                return Err(ContainerError::Truncated { needed: body_start + end, available: bytes.len() });
            }
            let raw = &body[e.offset..end];
            let data = match e.dtype {
                DType::F32 => TensorData::F32(raw.chunks_exact(4).map(f32::read_le).collect()),
                DType::F64 => TensorData::F64(raw.chunks_exact(8).map(f64::read_le).collect()),
                DType::I32 => TensorData::I32(
                    raw.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes"))).collect(),
                ),
            };
            tensors.push(NamedTensor { name: e.name, shape: e.shape, data });
        }
        Ok(Container { fingerprint: header.fingerprint, metadata: header.metadata, tensors })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ContainerError> {
        let path = path.as_ref();
        let io_err = |source| ContainerError::Io { path: path.display().to_string(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let mut f = fs::File::create(&tmp).map_err(io_err)?;
            f.write_all(&self.to_bytes()).map_err(io_err)?;
            f.sync_all().map_err(io_err)?;
        }
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ContainerError> {
        let path = path.as_ref();
        let bytes =
            fs::read(path).map_err(|source| ContainerError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

/// Short hex digest of any serializable configuration.
pub fn fingerprint_of<S: Serialize>(value: &S) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
