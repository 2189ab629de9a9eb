use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{hex, ExperimentError, Manifest, ManifestRow, Result};
use crate::audio::{canonicalize, decode_wav, ChannelMode};
use crate::features::{extract, FeatureConfig, FeatureKind, FeatureMap};

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub config: FeatureConfig,
    pub kinds: Vec<FeatureKind>,
    pub duration_s: f64,
    pub channel_mode: ChannelMode,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
}

impl ExtractOptions {
    pub fn new(config: FeatureConfig, kinds: Vec<FeatureKind>) -> Self {
        ExtractOptions {
            config,
            kinds,
            duration_s: 10.0,
            channel_mode: ChannelMode::Average,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractSummary {
    pub written: Vec<PathBuf>,
    pub skipped: usize,
    pub failed: Vec<(PathBuf, String)>,
}

/// Where the `kind` map of a manifest row lives: the row path mirrored under
/// `out_dir/<kind>/` with the extension `.spsf`.
pub fn feature_path(out_dir: &Path, row_path: &Path, kind: FeatureKind) -> PathBuf {
    let mut p = out_dir.join(kind.name());
    for c in row_path.components() {
        match c {
            Component::Normal(s) => p.push(s),
            Component::ParentDir => p.push("_up"),
            Component::CurDir | Component::RootDir | Component::Prefix(_) => {}
        }
    }
    p.set_extension("spsf");
    p
}

#[derive(Serialize)]
struct HashInput<'a> {
    config: &'a FeatureConfig,
    duration_s: f64,
    channel_mode: ChannelMode,
    kind: FeatureKind,
}

/// Cache key of one output: sha256 over the audio bytes and the extraction settings.
pub fn source_hash(audio: &[u8], opts: &ExtractOptions, kind: FeatureKind) -> String {
    let mut h = Sha256::new();
    h.update(audio);
    let settings = HashInput {
        config: &opts.config,
        duration_s: opts.duration_s,
        channel_mode: opts.channel_mode,
        kind,
    };
    h.update(serde_json::to_vec(&settings).expect("settings serialize"));
    hex(&h.finalize())
}

fn up_to_date(path: &Path, hash: &str) -> bool {
    std::fs::read(path)
        .ok()
        .and_then(|b| FeatureMap::from_bytes(&b).ok())
        .is_some_and(|(_, meta)| meta.source_hash.as_deref() == Some(hash))
}

enum ClipOutcome {
    Done { written: Vec<PathBuf>, skipped: usize },
    Failed(String),
}

fn extract_clip(manifest: &Manifest, row: &ManifestRow, opts: &ExtractOptions, out_dir: &Path) -> ClipOutcome {
    let run = || -> Result<(Vec<PathBuf>, usize)> {
        let audio = manifest.read_audio(row)?;
        let mut pending = Vec::new();
        for &kind in &opts.kinds {
            let path = feature_path(out_dir, &row.path, kind);
            let hash = source_hash(&audio, opts, kind);
            if !up_to_date(&path, &hash) {
                pending.push((kind, path, hash));
            }
        }
        let skipped = opts.kinds.len() - pending.len();
        if pending.is_empty() {
            return Ok((Vec::new(), skipped));
        }
        let clip = canonicalize(&decode_wav(&audio)?, opts.channel_mode, opts.config.sample_rate, opts.duration_s)?;
        let mut written = Vec::new();
        for (kind, path, hash) in pending {
            let map = extract(&clip, kind, &opts.config)?;
            let mut meta = map.metadata();
            meta.config = Some(opts.config.clone());
            meta.source_hash = Some(hash);
            super::write(&path, &map.to_bytes(&meta)?)?;
            written.push(path);
        }
        Ok((written, skipped))
    };
    match run() {
        Ok((written, skipped)) => ClipOutcome::Done { written, skipped },
        Err(e) => ClipOutcome::Failed(e.to_string()),
    }
}

/// Extract every requested representation of every clip, skipping outputs
/// whose stored source hash already matches. Failures are collected per clip.
pub fn extract_cmd(manifest: &Manifest, opts: &ExtractOptions, out_dir: &Path) -> Result<ExtractSummary> {
    opts.config.validate()?;
    if opts.kinds.is_empty() {
        return Err(ExperimentError::Invalid("no representation selected".into()));
    }
    let threads = match opts.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(manifest.len().max(1));
    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<Option<ClipOutcome>>> = Mutex::new((0..manifest.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(row) = manifest.rows.get(i) else { break };
                let outcome = extract_clip(manifest, row, opts, out_dir);
                outcomes.lock().expect("no worker panicked")[i] = Some(outcome);
            });
        }
    });
    let mut summary = ExtractSummary::default();
    for (row, outcome) in manifest.rows.iter().zip(outcomes.into_inner().expect("no worker panicked")) {
        match outcome.expect("every clip visited") {
            ClipOutcome::Done { written, skipped } => {
                summary.written.extend(written);
                summary.skipped += skipped;
            }
            ClipOutcome::Failed(e) => summary.failed.push((manifest.resolve(row), e)),
        }
    }
    Ok(summary)
}

impl ExtractSummary {
    /// `Err` when any clip failed.
    pub fn into_result(self) -> Result<Self> {
        match self.failed.first() {
            None => Ok(self),
            Some((path, e)) => Err(ExperimentError::Extraction {
                failed: self.failed.len(),
                total: self.failed.len() + self.written.len() + self.skipped,
                first: format!("{}: {e}", path.display()),
            }),
        }
    }
}

/// Load the extracted maps of every manifest row.
pub fn load_clip_features(
    manifest: &Manifest,
    feature_dir: &Path,
    kinds: &[FeatureKind],
) -> Result<Vec<BTreeMap<FeatureKind, FeatureMap>>> {
    manifest
        .rows
        .iter()
        .map(|row| {
            kinds
                .iter()
                .map(|&kind| {
                    let path = feature_path(feature_dir, &row.path, kind);
                    let bytes = std::fs::read(&path).map_err(|_| ExperimentError::MissingFeatures {
                        clip: row.path.clone(),
                        kind: kind.name().into(),
                    })?;
                    let (map, _) = FeatureMap::from_bytes(&bytes)?;
                    if map.kind != kind {
                        return Err(ExperimentError::Invalid(format!(
                            "{} holds {} features, expected {kind}",
                            path.display(),
                            map.kind
                        )));
                    }
                    Ok((kind, map))
                })
                .collect()
        })
        .collect()
}
