//! Task1A / Task1B networks and their early, middle and late fusion variants.

mod checkpoint;
mod head;
mod network;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ContainerError, FeatureError};
use crate::nn::NnError;

pub use checkpoint::{Checkpoint, CheckpointInfo, CheckpointMeta, TensorEntry};
pub use head::{frames_from_maps, maps_grad_from_frames};
pub use network::{LayerRow, Network};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("input shape {got:?} does not match the network's expected {expected}")]
    InputShape { expected: String, got: Vec<usize> },
    #[error("input too short: {0}")]
    InvalidInput(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
}

impl From<FeatureError> for ModelError {
    fn from(e: FeatureError) -> Self {
        ModelError::Checkpoint(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Architecture {
    Task1A,
    Task1B,
}

/// One convolutional stage of the base stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockDef {
    pub channels: usize,
    pub kernel: usize,
    pub convs: usize,
    /// `(time, frequency)` average-pooling extents applied after the convs.
    pub pool: Option<(usize, usize)>,
}

impl Architecture {
    pub fn blocks(self) -> [BlockDef; 4] {
        let b = |channels, kernel, convs, pool| BlockDef {
            channels,
            kernel,
            convs,
            pool,
        };
        match self {
            Architecture::Task1A => [
                b(64, 3, 2, Some((4, 2))),
                b(128, 3, 2, Some((4, 2))),
                b(256, 3, 2, Some((2, 2))),
                b(512, 3, 2, None),
            ],
            Architecture::Task1B => [
                b(32, 7, 1, Some((4, 2))),
                b(32, 7, 1, Some((4, 2))),
                b(64, 3, 1, Some((2, 2))),
                b(64, 3, 1, None),
            ],
        }
    }

    /// Width of the hidden fully-connected layer.
    pub fn hidden(self) -> usize {
        match self {
            Architecture::Task1A => 512,
            Architecture::Task1B => 200,
        }
    }

    pub fn embedding(self) -> usize {
        self.blocks()[3].channels
    }

    /// Smallest `(time, frequency)` input extent that survives every pooling stage.
    pub fn min_input(self) -> (usize, usize) {
        self.blocks()
            .iter()
            .filter_map(|b| b.pool)
            .fold((1, 1), |(t, f), (pt, pf)| (t * pt, f * pf))
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Task1A => "TASK1A",
            Architecture::Task1B => "TASK1B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum Fusion {
    /// One representation, one channel.
    Single,
    /// Representations stacked as input channels of one network.
    #[serde(rename = "EF")]
    Early,
    /// Per-representation copies of the first `after_block` conv blocks,
    /// channel concatenation, then the shared remainder.
    #[serde(rename = "MF")]
    Middle { after_block: usize },
    /// Per-representation conv stacks, concatenated pooled embeddings and one
    /// shared classifier.
    #[serde(rename = "LF")]
    Late,
}

impl Fusion {
    pub const DEFAULT_MIDDLE: Fusion = Fusion::Middle { after_block: 1 };

    pub fn name(self) -> &'static str {
        match self {
            Fusion::Single => "SINGLE",
            Fusion::Early => "EF",
            Fusion::Middle { .. } => "MF",
            Fusion::Late => "LF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Global pooling (mean over frequency, max over time) and one classifier pass.
    #[default]
    Standard,
    /// The shared classifier scores every temporal frame of the deep feature
    /// map; frame probabilities are averaged.
    Spsmt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub architecture: Architecture,
    pub fusion: Fusion,
    /// Input channels: 1 for a single representation, otherwise the number of
    /// fused representations.
    pub in_channels: usize,
    pub n_classes: usize,
    pub n_bands: usize,
    #[serde(default)]
    pub head: Head,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_dropout() -> f64 {
    0.5
}

impl NetworkSpec {
    pub fn new(architecture: Architecture, n_classes: usize, n_bands: usize) -> Self {
        NetworkSpec {
            architecture,
            fusion: Fusion::Single,
            in_channels: 1,
            n_classes,
            n_bands,
            head: Head::Standard,
            dropout: default_dropout(),
        }
    }

    pub fn task1a(n_bands: usize) -> Self {
        Self::new(Architecture::Task1A, 10, n_bands)
    }

    pub fn task1b(n_bands: usize) -> Self {
        Self::new(Architecture::Task1B, 3, n_bands)
    }

    pub fn with_fusion(mut self, fusion: Fusion, representations: usize) -> Self {
        self.fusion = fusion;
        self.in_channels = representations;
        self
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if self.n_classes < 2 {
            return bad(format!("{} classes; need at least 2", self.n_classes));
        }
        if self.in_channels == 0 {
            return bad("zero input channels".into());
        }
        if self.fusion == Fusion::Single && self.in_channels != 1 {
            return bad(format!("single-representation network with {} channels", self.in_channels));
        }
        if let Fusion::Middle { after_block } = self.fusion {
            if !(1..=3).contains(&after_block) {
                return bad(format!("middle fusion after block {after_block}; must be 1..=3"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        let (_, min_f) = self.architecture.min_input();
        if self.n_bands < min_f {
            return bad(format!("{} bands; pooling needs at least {min_f}", self.n_bands));
        }
        Ok(())
    }

    /// Short id such as `TASK1B-EF-spsmt`.
    pub fn id(&self) -> String {
        let mut s = format!("{}-{}", self.architecture.name(), self.fusion.name());
        if let Fusion::Middle { after_block } = self.fusion {
            s.push_str(&format!("{after_block}"));
        }
        if self.head == Head::Spsmt {
            s.push_str("-spsmt");
        }
        s
    }
}

/// Parameter bytes at four bytes per element.
pub fn param_bytes(params: usize) -> u64 {
    params as u64 * 4
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_serde_round_trip() {
        let spec = NetworkSpec::task1a(40).with_fusion(Fusion::Middle { after_block: 2 }, 4).with_head(Head::Spsmt);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"TASK1A\"") && json.contains("\"MF\""), "{json}");
        let back: NetworkSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn validation() {
        assert!(NetworkSpec::task1b(64).validate().is_ok());
        assert!(NetworkSpec::task1b(4).validate().is_err());
        assert!(NetworkSpec::task1b(64).with_fusion(Fusion::Middle { after_block: 4 }, 2).validate().is_err());
        let mut s = NetworkSpec::task1b(64);
        s.in_channels = 3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn minimum_input() {
        assert_eq!(Architecture::Task1A.min_input(), (32, 8));
        assert_eq!(Architecture::Task1B.min_input(), (32, 8));
    }
}
