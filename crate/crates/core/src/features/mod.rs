//! Time-frequency representations used as network inputs.
//!
//! All four extractors share the same frame grid: frame `t` is anchored at
//! sample `t * hop` and spans `window` samples, with no centering or
//! reflection padding, so `T = 1 + floor((n - window) / hop)` for every kind.
//! CQT kernels are evaluated at the frame centres `t * hop + window / 2`.

mod container;
mod cqt;
mod gammatone;
mod mel;
mod stft;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;

pub use container::{ContainerError, SpsfFile, CHECKPOINT_KIND, DTYPE_F32, SPSF_MAGIC, SPSF_VERSION};
pub use cqt::{cqt, cqt_frequencies, cqt_q, CqtKernels};
pub use gammatone::{erb, erb_space, gammatone, gammatone_weights};
pub use mel::{dct_matrix, hz_to_mel, log_mel, mel_filterbank, mel_to_hz, mfcc, FilterBank};
pub use stft::{frame_count, hann_window, stft_power, PowerSpectrogram};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid argument `{name}`: {detail}")]
    InvalidArgument { name: &'static str, detail: String },
    #[error("expected a mono clip, got {0} channels")]
    NotMono(usize),
    #[error("clip sample rate {found} Hz does not match the configured {expected} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("unknown feature kind `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("feature metadata: {0}")]
    Metadata(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

pub(crate) fn invalid(name: &'static str, detail: impl Into<String>) -> FeatureError {
    FeatureError::InvalidArgument {
        name,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    LogMel,
    Cqt,
    Gamma,
    Mfcc,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::LogMel,
        FeatureKind::Cqt,
        FeatureKind::Gamma,
        FeatureKind::Mfcc,
    ];

    /// Type byte used by the `SPSF` container.
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::LogMel => 0,
            FeatureKind::Cqt => 1,
            FeatureKind::Gamma => 2,
            FeatureKind::Mfcc => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::LogMel => "log_mel",
            FeatureKind::Cqt => "cqt",
            FeatureKind::Gamma => "gamma",
            FeatureKind::Mfcc => "mfcc",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "log_mel" | "logmel" | "mel" => Ok(FeatureKind::LogMel),
            "cqt" => Ok(FeatureKind::Cqt),
            "gamma" | "gammatone" => Ok(FeatureKind::Gamma),
            "mfcc" => Ok(FeatureKind::Mfcc),
            _ => Err(FeatureError::UnknownKind(s.to_string())),
        }
    }
}

/// Band count per representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandCounts {
    pub log_mel: usize,
    pub cqt: usize,
    pub gamma: usize,
    pub mfcc: usize,
}

impl BandCounts {
    pub fn get(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::LogMel => self.log_mel,
            FeatureKind::Cqt => self.cqt,
            FeatureKind::Gamma => self.gamma,
            FeatureKind::Mfcc => self.mfcc,
        }
    }

    pub fn uniform(n: usize) -> Self {
        BandCounts {
            log_mel: n,
            cqt: n,
            gamma: n,
            mfcc: n,
        }
    }
}

/// C1 in Hz.
pub const CQT_DEFAULT_FMIN: f64 = 32.703_195_662_574_83;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub n_bands: BandCounts,
    pub mel_fmin: f64,
    /// `None` means Nyquist.
    pub mel_fmax: Option<f64>,
    /// Mel bands feeding the MFCC DCT; `n_bands.mfcc` coefficients are kept.
    pub mfcc_mels: usize,
    pub cqt_fmin: f64,
    pub cqt_bins_per_octave: usize,
    pub gamma_fmin: f64,
    pub gamma_fmax: Option<f64>,
    pub log_offset: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::task1a()
    }
}

impl FeatureConfig {
    /// 44.1 kHz, 2048/512 framing, 40/64/64/40 bands.
    pub fn task1a() -> Self {
        FeatureConfig {
            sample_rate: 44100,
            window: 2048,
            hop: 512,
            n_bands: BandCounts {
                log_mel: 40,
                cqt: 64,
                gamma: 64,
                mfcc: 40,
            },
            mel_fmin: 0.0,
            mel_fmax: None,
            mfcc_mels: 40,
            cqt_fmin: CQT_DEFAULT_FMIN,
            cqt_bins_per_octave: 8,
            gamma_fmin: 50.0,
            gamma_fmax: None,
            log_offset: 1e-10,
        }
    }

    /// Every representation at 64 bands, as required for channel stacking.
    pub fn common_64() -> Self {
        FeatureConfig {
            n_bands: BandCounts::uniform(64),
            mfcc_mels: 64,
            ..Self::task1a()
        }
    }

    pub fn task1b() -> Self {
        Self::common_64()
    }

    pub fn nyquist(&self) -> f64 {
        f64::from(self.sample_rate) / 2.0
    }

    pub fn mel_fmax(&self) -> f64 {
        self.mel_fmax.unwrap_or_else(|| self.nyquist())
    }

    pub fn gamma_fmax(&self) -> f64 {
        self.gamma_fmax.unwrap_or_else(|| self.nyquist())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(invalid("sample_rate", "must be positive"));
        }
        if self.hop == 0 || self.window < self.hop {
            return Err(invalid(
                "hop",
                format!("need window >= hop > 0, got window {} hop {}", self.window, self.hop),
            ));
        }
        if !self.window.is_power_of_two() {
            return Err(invalid("window", format!("{} is not a power of two", self.window)));
        }
        if !(self.log_offset > 0.0) {
            return Err(invalid("log_offset", "must be positive"));
        }
        for (name, lo, hi) in [
            ("mel_fmax", self.mel_fmin, self.mel_fmax()),
            ("gamma_fmax", self.gamma_fmin, self.gamma_fmax()),
        ] {
            if !(lo >= 0.0 && lo < hi && hi <= self.nyquist()) {
                return Err(invalid(
                    name,
                    format!("need 0 <= fmin < fmax <= {}, got {lo}..{hi}", self.nyquist()),
                ));
            }
        }
        Ok(())
    }
}

/// A `T x F` grid of time frames by frequency bands, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub values: Vec<f32>,
    pub frames: usize,
    pub bands: usize,
    pub kind: FeatureKind,
    pub sample_rate: u32,
    pub hop: usize,
    pub window: usize,
}

impl FeatureMap {
    pub fn at(&self, t: usize, f: usize) -> f32 {
        self.values[t * self.bands + f]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.bands..(t + 1) * self.bands]
    }

    /// Copy of bands `lo..hi` for every frame.
    pub fn band_slice(&self, lo: usize, hi: usize) -> FeatureMap {
        assert!(lo < hi && hi <= self.bands, "band range {lo}..{hi} outside 0..{}", self.bands);
        let mut values = Vec::with_capacity(self.frames * (hi - lo));
        for t in 0..self.frames {
            values.extend_from_slice(&self.frame(t)[lo..hi]);
        }
        FeatureMap {
            values,
            bands: hi - lo,
            ..self.clone()
        }
    }
}

fn check_clip(clip: &AudioClip, cfg: &FeatureConfig) -> Result<()> {
    if clip.channels != 1 {
        return Err(FeatureError::NotMono(clip.channels));
    }
    if clip.sample_rate != cfg.sample_rate {
        return Err(FeatureError::SampleRateMismatch {
            expected: cfg.sample_rate,
            found: clip.sample_rate,
        });
    }
    cfg.validate()
}

/// Dispatch to the extractor for `kind`.
pub fn extract(clip: &AudioClip, kind: FeatureKind, cfg: &FeatureConfig) -> Result<FeatureMap> {
    match kind {
        FeatureKind::LogMel => log_mel(clip, cfg),
        FeatureKind::Cqt => cqt(clip, cfg),
        FeatureKind::Gamma => gammatone(clip, cfg),
        FeatureKind::Mfcc => mfcc(clip, cfg),
    }
}

/// JSON blob stored after the payload of a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    pub kind: FeatureKind,
    pub sample_rate: u32,
    pub hop: usize,
    pub window: usize,
    pub n_bands: usize,
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<FeatureConfig>,
    /// Content hash of the source audio and extraction config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_hash: Option<String>,
}

impl FeatureMap {
    pub fn metadata(&self) -> FeatureMetadata {
        FeatureMetadata {
            kind: self.kind,
            sample_rate: self.sample_rate,
            hop: self.hop,
            window: self.window,
            n_bands: self.bands,
            frames: self.frames,
            config: None,
            source_hash: None,
        }
    }

    pub fn to_spsf(&self, metadata: &FeatureMetadata) -> Result<SpsfFile> {
        Ok(SpsfFile {
            kind: self.kind.code(),
            dims: vec![self.frames as u32, self.bands as u32],
            payload: self.values.clone(),
            metadata: serde_json::to_vec(metadata)?,
        })
    }

    pub fn to_bytes(&self, metadata: &FeatureMetadata) -> Result<Vec<u8>> {
        Ok(self.to_spsf(metadata)?.encode())
    }

    pub fn from_spsf(file: &SpsfFile) -> Result<(FeatureMap, FeatureMetadata)> {
        let kind = FeatureKind::from_code(file.kind)
            .ok_or_else(|| FeatureError::UnknownKind(format!("type byte {}", file.kind)))?;
        if file.dims.len() != 2 {
            return Err(invalid("dims", format!("feature maps are 2-D, file has {} dims", file.dims.len())));
        }
        let meta: FeatureMetadata = serde_json::from_slice(&file.metadata)?;
        let (frames, bands) = (file.dims[0] as usize, file.dims[1] as usize);
        if meta.kind != kind || meta.frames != frames || meta.n_bands != bands {
            return Err(invalid("metadata", "metadata disagrees with the binary header"));
        }
        Ok((
            FeatureMap {
                values: file.payload.clone(),
                frames,
                bands,
                kind,
                sample_rate: meta.sample_rate,
                hop: meta.hop,
                window: meta.window,
            },
            meta,
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(FeatureMap, FeatureMetadata)> {
        Self::from_spsf(&SpsfFile::decode(bytes)?)
    }
}
