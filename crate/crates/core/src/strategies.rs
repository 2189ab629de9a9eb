//! Decision-level strategies: averaging post-softmax scores across
//! representations (SPSMR), frequency sub-bands (SPSMF) and temporal frames
//! (SPSMT).

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureKind, FeatureMap};
use crate::models::{Head, ModelError, Network};
use crate::nn::{NnError, Tensor};

/// Allowed deviation of a probability vector's sum from one.
pub const SCORE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("empty composition: choose at least one of SPSMR, SPSMF, SPSMT")]
    EmptyComposition,
    #[error("strategy {0} given more than once")]
    DuplicateStrategy(&'static str),
    #[error("ensemble has no members")]
    EmptyBundle,
    #[error("no {0} feature map supplied")]
    MissingRepresentation(FeatureKind),
    #[error("invalid score vector: {0}")]
    InvalidScores(String),
    #[error("members disagree on class count: {0} vs {1}")]
    ClassMismatch(usize, usize),
    #[error("band range {lo}..{hi} does not fit a {bands}-band map")]
    BandMismatch { lo: usize, hi: usize, bands: usize },
    #[error("invalid argument `{name}`: {detail}")]
    InvalidArgument { name: &'static str, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<NnError> for StrategyError {
    fn from(e: NnError) -> Self {
        StrategyError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, StrategyError>;

fn invalid(name: &'static str, detail: impl Into<String>) -> StrategyError {
    StrategyError::InvalidArgument {
        name,
        detail: detail.into(),
    }
}

/// A probability vector over the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector {
    probs: Vec<f64>,
}

impl ScoreVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(StrategyError::InvalidScores("no classes".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(StrategyError::InvalidScores(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SCORE_TOLERANCE {
            return Err(StrategyError::InvalidScores(format!("sums to {sum}")));
        }
        Ok(ScoreVector { probs })
    }

    pub fn uniform(n: usize) -> Self {
        ScoreVector {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Rows of a `[batch, classes]` probability tensor.
    pub fn from_batch(probs: &Tensor<f32>) -> Result<Vec<Self>> {
        if probs.dims().len() != 2 {
            return Err(StrategyError::InvalidScores(format!("expected [batch, classes], got {:?}", probs.dims())));
        }
        let n = probs.dims()[1];
        probs
            .data()
            .chunks_exact(n)
            .map(|row| ScoreVector::new(row.iter().map(|&p| f64::from(p)).collect()))
            .collect()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; the first one on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Arithmetic mean of score vectors, summed in member order.
pub fn mean_scores(scores: &[ScoreVector]) -> Result<ScoreVector> {
    let first = scores.first().ok_or(StrategyError::EmptyBundle)?;
    let n = first.len();
    let mut acc = vec![0.0; n];
    for s in scores {
        if s.len() != n {
            return Err(StrategyError::ClassMismatch(n, s.len()));
        }
        for (a, p) in acc.iter_mut().zip(&s.probs) {
            *a += p;
        }
    }
    let count = scores.len() as f64;
    Ok(ScoreVector {
        probs: acc.into_iter().map(|a| a / count).collect(),
    })
}

/// Frequency sub-band layout for SPSMF.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubbandSplit {
    pub n_bands: usize,
    pub f: usize,
    pub overlap: usize,
    /// Half-open `[lo, hi)` band ranges.
    pub ranges: Vec<(usize, usize)>,
}

impl SubbandSplit {
    /// `f` ranges of width `floor((F + (f-1) * overlap) / f)` with stride
    /// `width - overlap`; the last range is extended to end at `F`.
    pub fn new(n_bands: usize, f: usize, overlap: usize) -> Result<Self> {
        if f == 0 {
            return Err(invalid("f", "need at least one sub-band"));
        }
        if f > n_bands {
            return Err(invalid("f", format!("{f} sub-bands exceed {n_bands} bands")));
        }
        let width = (n_bands + (f - 1) * overlap) / f;
        if width == 0 || (f > 1 && overlap >= width) {
            return Err(invalid(
                "overlap",
                format!("overlap {overlap} leaves no stride for sub-band width {width}"),
            ));
        }
        let stride = width.saturating_sub(overlap);
        let mut ranges: Vec<(usize, usize)> = (0..f).map(|i| (i * stride, i * stride + width)).collect();
        if let Some(last) = ranges.last_mut() {
            last.1 = n_bands;
        }
        Ok(SubbandSplit {
            n_bands,
            f,
            overlap,
            ranges,
        })
    }

    pub fn apply(&self, m: &FeatureMap) -> Result<Vec<FeatureMap>> {
        if m.bands != self.n_bands {
            return Err(StrategyError::BandMismatch {
                lo: 0,
                hi: self.n_bands,
                bands: m.bands,
            });
        }
        Ok(self.ranges.iter().map(|&(lo, hi)| m.band_slice(lo, hi)).collect())
    }
}

/// Cut `m` into `f` sub-spectrograms along the band axis.
pub fn split_subbands(m: &FeatureMap, f: usize, overlap: usize) -> Result<Vec<FeatureMap>> {
    SubbandSplit::new(m.bands, f, overlap)?.apply(m)
}

/// One trained network of an ensemble and the input it consumes.
#[derive(Debug, Clone)]
pub struct Member {
    pub network: Network<f32>,
    /// Representations stacked as input channels, in channel order.
    pub kinds: Vec<FeatureKind>,
    /// Band range cropped from every representation before the network.
    pub bands: Option<(usize, usize)>,
}

impl Member {
    pub fn new(network: Network<f32>, kinds: Vec<FeatureKind>, bands: Option<(usize, usize)>) -> Result<Self> {
        if kinds.len() != network.spec.in_channels {
            return Err(invalid(
                "kinds",
                format!("{} representations for a {}-channel network", kinds.len(), network.spec.in_channels),
            ));
        }
        Ok(Member { network, kinds, bands })
    }

    /// `[1, channels, T, F]` input for one clip.
    pub fn input(&self, features: &BTreeMap<FeatureKind, FeatureMap>) -> Result<Tensor<f32>> {
        self.batch_input(&[features])
    }

    /// `[batch, channels, T, F]` input for several clips.
    pub fn batch_input(&self, clips: &[&BTreeMap<FeatureKind, FeatureMap>]) -> Result<Tensor<f32>> {
        let mut data = Vec::new();
        let mut geometry: Option<(usize, usize)> = None;
        for features in clips {
            for &kind in &self.kinds {
                let m = features.get(&kind).ok_or(StrategyError::MissingRepresentation(kind))?;
                let cropped;
                let m = match self.bands {
                    Some((lo, hi)) => {
                        if lo >= hi || hi > m.bands {
                            return Err(StrategyError::BandMismatch { lo, hi, bands: m.bands });
                        }
                        cropped = m.band_slice(lo, hi);
                        &cropped
                    }
                    None => m,
                };
                match geometry {
                    None => geometry = Some((m.frames, m.bands)),
                    Some(g) if g != (m.frames, m.bands) => {
                        return Err(ModelError::InputShape {
                            expected: format!("{} frames x {} bands", g.0, g.1),
                            got: vec![m.frames, m.bands],
                        }
                        .into())
                    }
                    Some(_) => {}
                }
                data.extend_from_slice(&m.values);
            }
        }
        let (t, f) = geometry.ok_or(StrategyError::EmptyBundle)?;
        Ok(Tensor::from_vec(&[clips.len(), self.kinds.len(), t, f], data)?)
    }

    pub fn predict(&self, features: &BTreeMap<FeatureKind, FeatureMap>) -> Result<ScoreVector> {
        let probs = self.network.predict(&self.input(features)?)?;
        Ok(ScoreVector::from_batch(&probs)?.remove(0))
    }
}

/// Networks whose post-softmax scores are averaged with equal weight.
#[derive(Debug, Clone)]
pub struct EnsembleBundle {
    pub members: Vec<Member>,
}

impl EnsembleBundle {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        let first = members.first().ok_or(StrategyError::EmptyBundle)?;
        let n = first.network.spec.n_classes;
        if let Some(m) = members.iter().find(|m| m.network.spec.n_classes != n) {
            return Err(StrategyError::ClassMismatch(n, m.network.spec.n_classes));
        }
        Ok(EnsembleBundle { members })
    }

    pub fn n_classes(&self) -> usize {
        self.members[0].network.spec.n_classes
    }

    pub fn param_count(&self) -> usize {
        self.members.iter().map(|m| m.network.param_count()).sum()
    }

    /// Every representation any member reads.
    pub fn kinds(&self) -> Vec<FeatureKind> {
        let mut kinds: Vec<FeatureKind> = self.members.iter().flat_map(|m| m.kinds.iter().copied()).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    pub fn member_scores(&self, features: &BTreeMap<FeatureKind, FeatureMap>) -> Result<Vec<ScoreVector>> {
        self.members.iter().map(|m| m.predict(features)).collect()
    }

    /// Flat mean over all member scores.
    pub fn predict(&self, features: &BTreeMap<FeatureKind, FeatureMap>) -> Result<ScoreVector> {
        mean_scores(&self.member_scores(features)?)
    }
}

/// Average of one network per representation.
pub fn spsmr_predict(bundle: &EnsembleBundle, features: &BTreeMap<FeatureKind, FeatureMap>) -> Result<ScoreVector> {
    bundle.predict(features)
}

/// Average of sub-band networks over one representation.
pub fn spsmf_predict(bundle: &EnsembleBundle, m: &FeatureMap) -> Result<ScoreVector> {
    let features = BTreeMap::from([(m.kind, m.clone())]);
    bundle.predict(&features)
}

/// Frame-wise scoring with the network's shared classifier, averaged over
/// frames. Returns `[batch, classes]` probabilities.
pub fn spsmt_forward(net: &Network<f32>, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
    Ok(net.predict_with_head(batch, Head::Spsmt)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "UPPERCASE")]
pub enum Strategy {
    Spsmr,
    Spsmf { f: usize, overlap: usize },
    Spsmt,
}

/// Training/inference plan for a member of a composed pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberPlan {
    pub id: String,
    pub kinds: Vec<FeatureKind>,
    pub bands: Option<(usize, usize)>,
    pub n_bands: usize,
    pub head: Head,
}

/// Any subset of the three strategies, combined by a flat mean over leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Composition {
    pub spsmr: bool,
    pub spsmf: Option<(usize, usize)>,
    pub spsmt: bool,
}

pub fn compose(strategies: &[Strategy]) -> Result<Composition> {
    if strategies.is_empty() {
        return Err(StrategyError::EmptyComposition);
    }
    let mut c = Composition::default();
    for s in strategies {
        match *s {
            Strategy::Spsmr if c.spsmr => return Err(StrategyError::DuplicateStrategy("SPSMR")),
            Strategy::Spsmr => c.spsmr = true,
            Strategy::Spsmf { .. } if c.spsmf.is_some() => return Err(StrategyError::DuplicateStrategy("SPSMF")),
            Strategy::Spsmf { f, overlap } => c.spsmf = Some((f, overlap)),
            Strategy::Spsmt if c.spsmt => return Err(StrategyError::DuplicateStrategy("SPSMT")),
            Strategy::Spsmt => c.spsmt = true,
        }
    }
    Ok(c)
}

impl Composition {
    pub fn head(&self) -> Head {
        if self.spsmt {
            Head::Spsmt
        } else {
            Head::Standard
        }
    }

    /// Members in combination order: representation-major, then sub-band.
    pub fn plan(&self, kinds: &[FeatureKind], n_bands: impl Fn(FeatureKind) -> usize) -> Result<Vec<MemberPlan>> {
        if kinds.is_empty() {
            return Err(invalid("kinds", "no representation selected"));
        }
        if !self.spsmr && kinds.len() != 1 {
            return Err(invalid(
                "kinds",
                format!("{} representations without SPSMR; give exactly one", kinds.len()),
            ));
        }
        let mut plans = Vec::new();
        for &kind in kinds {
            let bands = n_bands(kind);
            match self.spsmf {
                Some((f, overlap)) => {
                    let split = SubbandSplit::new(bands, f, overlap)?;
                    for (i, &(lo, hi)) in split.ranges.iter().enumerate() {
                        plans.push(MemberPlan {
                            id: format!("{}-band{i}", kind.name()),
                            kinds: vec![kind],
                            bands: Some((lo, hi)),
                            n_bands: hi - lo,
                            head: self.head(),
                        });
                    }
                }
                None => plans.push(MemberPlan {
                    id: kind.name().to_string(),
                    kinds: vec![kind],
                    bands: None,
                    n_bands: bands,
                    head: self.head(),
                }),
            }
        }
        Ok(plans)
    }

    pub fn combine(&self, leaves: &[ScoreVector]) -> Result<ScoreVector> {
        mean_scores(leaves)
    }
}

/// One entry of an ensemble manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub checkpoint: PathBuf,
    pub kinds: Vec<FeatureKind>,
    #[serde(default)]
    pub bands: Option<(usize, usize)>,
    #[serde(default)]
    pub head: Head,
}

/// JSON file listing the checkpoints of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub labels: Vec<String>,
    pub members: Vec<MemberEntry>,
}
