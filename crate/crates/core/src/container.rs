//! The `BIMC1` model file.
//!
//! ```text
//! magic      6 bytes  "BIMC1\0"
//! version    u32 LE   1
//! kind       u32 LE   1 = svm-linear-ovr, 2 = cnn
//! spec_len   u32 LE   length of the JSON spec block
//! spec       spec_len bytes of UTF-8 JSON
//! n_blobs    u32 LE
//! n_blobs x  { count: u64 LE, count x f64 LE }
//! ```
//!
//! SVM blobs are one weight row per class followed by the bias vector. CNN
//! blobs follow [`Network::blobs`] (topology order).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hog::HogParams;
use crate::nn::{Network, NetworkSpec, NnError};
use crate::svm::LinearSvmModel;

pub const MAGIC: &[u8; 6] = b"BIMC1\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a BIMC1 file")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown model kind tag {0}")]
    UnknownKind(u32),
    #[error("truncated container")]
    Truncated,
    #[error("{0} trailing bytes after the last blob")]
    TrailingBytes(usize),
    #[error("invalid spec block: {0}")]
    Spec(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindTag {
    SvmLinearOvr = 1,
    Cnn = 2,
}

impl KindTag {
    pub fn from_u32(v: u32) -> Result<KindTag, ContainerError> {
        match v {
            1 => Ok(KindTag::SvmLinearOvr),
            2 => Ok(KindTag::Cnn),
            _ => Err(ContainerError::UnknownKind(v)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KindTag::SvmLinearOvr => "svm",
            KindTag::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: KindTag,
    pub spec: String,
    pub blobs: Vec<Vec<f64>>,
}

pub fn encode(c: &Container) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(c.kind as u32).to_le_bytes());
    out.extend_from_slice(&(c.spec.len() as u32).to_le_bytes());
    out.extend_from_slice(c.spec.as_bytes());
    out.extend_from_slice(&(c.blobs.len() as u32).to_le_bytes());
    for b in &c.blobs {
        out.extend_from_slice(&(b.len() as u64).to_le_bytes());
        for v in b {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.bytes.len() < n {
            return Err(ContainerError::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Container, ContainerError> {
    let mut r = Reader { bytes };
    if r.take(MAGIC.len()).map_err(|_| ContainerError::BadMagic)? != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let kind = KindTag::from_u32(r.u32()?)?;
    let spec_len = r.u32()? as usize;
    let spec = String::from_utf8(r.take(spec_len)?.to_vec()).map_err(|e| ContainerError::Spec(e.to_string()))?;
    let n_blobs = r.u32()?;
    let mut blobs = Vec::new();
    for _ in 0..n_blobs {
        let count = usize::try_from(r.u64()?).map_err(|_| ContainerError::Truncated)?;
        let raw = r.take(count.checked_mul(8).ok_or(ContainerError::Truncated)?)?;
        blobs.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
    }
    if !r.bytes.is_empty() {
        return Err(ContainerError::TrailingBytes(r.bytes.len()));
    }
    Ok(Container { kind, spec, blobs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSpec {
    pub n_classes: usize,
    pub n_features: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub image_size: usize,
    pub hog: HogParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub image_size: usize,
    pub network: NetworkSpec,
}

/// A model read back from disk with what is needed to preprocess inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Svm { model: LinearSvmModel, hog: HogParams, image_size: usize },
    Cnn { network: Network, image_size: usize },
}

impl SavedModel {
    pub fn kind(&self) -> KindTag {
        match self {
            SavedModel::Svm { .. } => KindTag::SvmLinearOvr,
            SavedModel::Cnn { .. } => KindTag::Cnn,
        }
    }

    pub fn image_size(&self) -> usize {
        match self {
            SavedModel::Svm { image_size, .. } | SavedModel::Cnn { image_size, .. } => *image_size,
        }
    }

    pub fn to_container(&self) -> Container {
        match self {
            SavedModel::Svm { model, hog, image_size } => {
                let spec = SvmSpec {
                    n_classes: model.n_classes,
                    n_features: model.n_features(),
                    lambda: model.lambda,
                    epochs: model.epochs,
                    seed: model.seed,
                    image_size: *image_size,
                    hog: *hog,
                };
                let mut blobs = model.weights.clone();
                blobs.push(model.biases.clone());
                Container { kind: KindTag::SvmLinearOvr, spec: serde_json::to_string(&spec).unwrap(), blobs }
            }
            SavedModel::Cnn { network, image_size } => {
                let spec = CnnSpec { image_size: *image_size, network: network.spec.clone() };
                Container { kind: KindTag::Cnn, spec: serde_json::to_string(&spec).unwrap(), blobs: network.blobs() }
            }
        }
    }

    pub fn from_container(c: Container) -> Result<SavedModel, ContainerError> {
        let bad = |e: serde_json::Error| ContainerError::Spec(e.to_string());
        match c.kind {
            KindTag::SvmLinearOvr => {
                let spec: SvmSpec = serde_json::from_str(&c.spec).map_err(bad)?;
                let mut blobs = c.blobs;
                if blobs.len() != spec.n_classes + 1
                    || blobs[..spec.n_classes].iter().any(|w| w.len() != spec.n_features)
                    || blobs[spec.n_classes].len() != spec.n_classes
                {
                    return Err(ContainerError::Spec("svm blobs do not match the spec".into()));
                }
                let biases = blobs.pop().unwrap();
                let model = LinearSvmModel {
                    weights: blobs,
                    biases,
                    n_classes: spec.n_classes,
                    lambda: spec.lambda,
                    epochs: spec.epochs,
                    seed: spec.seed,
                };
                Ok(SavedModel::Svm { model, hog: spec.hog, image_size: spec.image_size })
            }
            KindTag::Cnn => {
                let spec: CnnSpec = serde_json::from_str(&c.spec).map_err(bad)?;
                let network = Network::from_blobs(spec.network, c.blobs)?;
                Ok(SavedModel::Cnn { network, image_size: spec.image_size })
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ContainerError> {
        std::fs::write(path, encode(&self.to_container()))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SavedModel, ContainerError> {
        SavedModel::from_container(decode(&std::fs::read(path)?)?)
    }
}
