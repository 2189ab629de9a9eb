//! Acoustic scene classification from spectrogram representations.
//!
//! The crate covers the whole pipeline:
//!
//! - [`audio`]: WAV decoding, downmixing, Kaiser windowed-sinc resampling and
//!   length normalization.
//! - [`features`]: Log-Mel, CQT, Gammatone and MFCC time-frequency maps plus
//!   the `SPSF` on-disk container.
//! - [`nn`]: a small deterministic CNN kernel library (tensors, layers,
//!   cross-entropy, Adam, mixup).
//! - [`models`]: the VGG-style Task1A network, the tiny Task1B network and the
//!   early/middle/late fusion variants.
//! - [`strategies`]: decision-level averaging across representations (SPSMR),
//!   frequency sub-bands (SPSMF) and temporal frames (SPSMT).
//! - [`metrics`]: macro-average accuracy, log loss and model size.
//! - [`experiment`]: manifests, synthetic data, feature caching, training and
//!   evaluation drivers used by the `ascnet` binary.

pub mod audio;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod strategies;

pub use audio::{AudioClip, AudioError};
pub use features::{FeatureConfig, FeatureError, FeatureKind, FeatureMap};
pub use metrics::EvalReport;
pub use models::{Architecture, Fusion, Head, Network, NetworkSpec};
pub use nn::{Mode, NnError, Real, Tensor};
pub use strategies::{EnsembleBundle, ScoreVector, StrategyError, SubbandSplit};
