use serde::{Deserialize, Serialize};

use crate::features::{SpsfFile, CHECKPOINT_KIND};
use crate::nn::Tensor;

use super::{Head, LayerRow, ModelError, Network, NetworkSpec, Result};

pub const CHECKPOINT_FORMAT: &str = "ascnet-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    /// Element offset into the flat payload.
    pub offset: usize,
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub step: u64,
    pub seed: u64,
    #[serde(default)]
    pub labels: Vec<String>,
    /// Fully resolved run configuration.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub spec: NetworkSpec,
    pub info: CheckpointInfo,
    pub layers: Vec<LayerRow>,
    pub tensors: Vec<TensorEntry>,
}

/// Network weights and BN running statistics packed into one `SPSF` file.
pub struct Checkpoint;

impl Checkpoint {
    pub fn to_spsf(net: &Network<f32>, info: &CheckpointInfo) -> Result<SpsfFile> {
        let mut tensors = Vec::new();
        let mut payload = Vec::new();
        for (name, t) in net.named_state() {
            tensors.push(TensorEntry {
                name,
                dims: t.dims().to_vec(),
                offset: payload.len(),
            });
            payload.extend_from_slice(t.data());
        }
        let meta = CheckpointMeta {
            format: CHECKPOINT_FORMAT.into(),
            spec: net.spec.clone(),
            info: info.clone(),
            layers: net.describe(),
            tensors,
        };
        let total = u32::try_from(payload.len())
            .map_err(|_| ModelError::Checkpoint(format!("{} elements exceed the container limit", payload.len())))?;
        Ok(SpsfFile {
            kind: CHECKPOINT_KIND,
            dims: vec![total],
            payload,
            metadata: serde_json::to_vec(&meta)?,
        })
    }

    pub fn to_bytes(net: &Network<f32>, info: &CheckpointInfo) -> Result<Vec<u8>> {
        Ok(Self::to_spsf(net, info)?.encode())
    }

    pub fn from_spsf(file: &SpsfFile) -> Result<(Network<f32>, CheckpointInfo)> {
        if file.kind != CHECKPOINT_KIND {
            return Err(ModelError::Checkpoint(format!("container kind {} is not a checkpoint", file.kind)));
        }
        let meta: CheckpointMeta = serde_json::from_slice(&file.metadata)?;
        if meta.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unknown format `{}`", meta.format)));
        }
        let mut net = Network::<f32>::build(meta.spec.clone())?;
        let slots = net.named_state_mut();
        if slots.len() != meta.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} stored tensors, architecture has {}",
                meta.tensors.len(),
                slots.len()
            )));
        }
        for ((name, slot), entry) in slots.into_iter().zip(&meta.tensors) {
            if name != entry.name || slot.dims() != entry.dims.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "expected `{name}` {:?}, found `{}` {:?}",
                    slot.dims(),
                    entry.name,
                    entry.dims
                )));
            }
            let end = entry.offset + slot.numel();
            let data = file.payload.get(entry.offset..end).ok_or_else(|| {
                ModelError::Checkpoint(format!("`{name}` spans {}..{end}, payload has {}", entry.offset, file.payload.len()))
            })?;
            *slot = Tensor::from_vec(&entry.dims, data.to_vec())?;
        }
        Ok((net, meta.info))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Network<f32>, CheckpointInfo)> {
        Self::from_spsf(&SpsfFile::decode(bytes)?)
    }

    /// Load and swap the head, e.g. to evaluate a standard checkpoint with
    /// frame-wise scoring. No tensor is remapped.
    pub fn from_bytes_with_head(bytes: &[u8], head: Head) -> Result<(Network<f32>, CheckpointInfo)> {
        let (mut net, info) = Self::from_bytes(bytes)?;
        net.set_head(head);
        Ok((net, info))
    }
}
