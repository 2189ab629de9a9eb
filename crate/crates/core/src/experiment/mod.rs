//! Drivers behind the `ascnet` subcommands.

mod config;
mod evaluate;
mod extract;
mod manifest;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{lr_at, parse_fusion, parse_strategy, parse_task, ConfigError, TrainConfig};
pub use evaluate::{bundle_scores, describe_model, evaluate_cmd, fuse, load_bundle, load_ensemble, MemberDescription, ModelDescription};
pub use extract::{extract_cmd, feature_path, load_clip_features, source_hash, ExtractOptions, ExtractSummary};
pub use manifest::{Manifest, ManifestRow};
pub use synth::{class_label, gen_synth, synth_clip, SynthCorpus, CLIP_SECONDS, SYNTH_RATE};
pub use train::{member_plans, LOG_HEADER, train_cmd, train_member, LogRow, MemberOutcome, TrainOutput, TrainReport};

use crate::audio::AudioError;
use crate::features::FeatureError;
use crate::metrics::MetricsError;
use crate::models::ModelError;
use crate::nn::NnError;
use crate::strategies::StrategyError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest {}: {detail}", path.display())]
    Manifest { path: PathBuf, detail: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing features for {} ({kind}); run `extract` first", clip.display())]
    MissingFeatures { clip: PathBuf, kind: String },
    #[error("{failed} of {total} extractions failed; first: {first}")]
    Extraction { failed: usize, total: usize, first: String },
    #[error("label `{0}` is not known to the model")]
    UnknownLabel(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<NnError> for ExperimentError {
    fn from(e: NnError) -> Self {
        ExperimentError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(io_err(path))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of an ensemble member: the first eight bytes of
/// `sha256(master.to_le_bytes() ++ id)`, little endian.
pub fn derive_seed(master: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn member_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "log_mel"), derive_seed(7, "log_mel"));
        assert_ne!(derive_seed(7, "log_mel"), derive_seed(7, "cqt"));
        assert_ne!(derive_seed(7, "log_mel"), derive_seed(8, "log_mel"));
    }
}
