use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, load_clip_features, ExperimentError, Manifest, Result, TrainConfig};
use crate::features::{FeatureKind, FeatureMap};
use crate::metrics::model_size;
use crate::models::{Checkpoint, CheckpointInfo, Fusion, Network, NetworkSpec};
use crate::nn::{mixup, AdamState, Tensor};
use crate::strategies::{EnsembleManifest, MemberEntry, MemberPlan};

/// Members trained for `cfg`, given the band count of each representation.
pub fn member_plans(cfg: &TrainConfig, n_bands: impl Fn(FeatureKind) -> usize) -> Result<Vec<MemberPlan>> {
    cfg.validate()?;
    let composition = cfg.composition()?;
    if cfg.fusion == Fusion::Single {
        return Ok(composition.plan(&cfg.kinds, n_bands)?);
    }
    let bands: Vec<usize> = cfg.kinds.iter().map(|&k| n_bands(k)).collect();
    if bands.iter().any(|&b| b != bands[0]) {
        return Err(ExperimentError::Invalid(format!(
            "{} fusion needs equal band counts, got {bands:?}",
            cfg.fusion.name()
        )));
    }
    let names: Vec<&str> = cfg.kinds.iter().map(|k| k.name()).collect();
    Ok(vec![MemberPlan {
        id: format!("{}-{}", cfg.fusion.name().to_ascii_lowercase(), names.join("+")),
        kinds: cfg.kinds.clone(),
        bands: None,
        n_bands: bands[0],
        head: composition.head(),
    }])
}

pub(crate) fn member_spec(cfg: &TrainConfig, plan: &MemberPlan, n_classes: usize) -> NetworkSpec {
    let mut spec = NetworkSpec::new(cfg.task, n_classes, plan.n_bands).with_head(plan.head);
    if cfg.fusion != Fusion::Single {
        spec = spec.with_fusion(cfg.fusion, plan.kinds.len());
    }
    spec.dropout = cfg.dropout;
    spec
}

/// Crop and channel-stack one clip for a member. Returns `(values, [C, T, F])`.
fn member_input(plan: &MemberPlan, clip: &BTreeMap<FeatureKind, FeatureMap>) -> Result<(Vec<f32>, [usize; 3])> {
    let mut values = Vec::new();
    let mut geometry = None;
    for kind in &plan.kinds {
        let map = clip.get(kind).ok_or_else(|| ExperimentError::Invalid(format!("no {kind} map loaded")))?;
        let map = match plan.bands {
            Some((lo, hi)) if hi <= map.bands && lo < hi => map.band_slice(lo, hi),
            Some((lo, hi)) => {
                return Err(ExperimentError::Invalid(format!("bands {lo}..{hi} outside a {}-band map", map.bands)))
            }
            None => map.clone(),
        };
        match geometry {
            None => geometry = Some((map.frames, map.bands)),
            Some(g) if g != (map.frames, map.bands) => {
                return Err(ExperimentError::Invalid(format!(
                    "{kind} map is {}x{}, other representations are {}x{}",
                    map.frames, map.bands, g.0, g.1
                )))
            }
            Some(_) => {}
        }
        values.extend_from_slice(&map.values);
    }
    let (t, f) = geometry.expect("plans have at least one representation");
    Ok((values, [plan.kinds.len(), t, f]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
}

pub const LOG_HEADER: &str = "iteration,lr,loss";

fn log_csv(rows: &[LogRow]) -> String {
    let mut s = format!("{LOG_HEADER}\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.iteration, r.lr, r.loss));
    }
    s
}

/// The iteration loop: shuffled mini-batches (reshuffled every pass over the
/// data), mixup, cross-entropy and Adam under the stepwise schedule.
/// `inputs` holds one `[C, T, F]` sample per clip.
pub fn train_member(
    cfg: &TrainConfig,
    spec: NetworkSpec,
    inputs: &[Vec<f32>],
    sample_dims: [usize; 3],
    targets: &[usize],
    seed: u64,
    mut on_step: impl FnMut(&LogRow),
) -> Result<(Network<f32>, Vec<LogRow>)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(ExperimentError::Invalid(format!("{} inputs for {} targets", inputs.len(), targets.len())));
    }
    let n_classes = spec.n_classes;
    if let Some(&t) = targets.iter().find(|&&t| t >= n_classes) {
        return Err(ExperimentError::Invalid(format!("target {t} for {n_classes} classes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f32>::new(spec, rng.random())?;
    let mut adam = AdamState::new(cfg.lr);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let sample_len: usize = sample_dims.iter().product();
    let mut log = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let mut x = Vec::with_capacity(cfg.batch_size * sample_len);
        let mut y = vec![0.0f32; cfg.batch_size * n_classes];
        for b in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor];
            cursor += 1;
            x.extend_from_slice(&inputs[i]);
            y[b * n_classes + targets[i]] = 1.0;
        }
        let dims = [cfg.batch_size, sample_dims[0], sample_dims[1], sample_dims[2]];
        let mut x = Tensor::from_vec(&dims, x)?;
        let mut y = Tensor::from_vec(&[cfg.batch_size, n_classes], y)?;
        if cfg.mixup_alpha > 0.0 {
            (x, y) = mixup(&x, &y, cfg.mixup_alpha, &mut rng)?;
        }
        let lr = cfg.lr_at(iteration);
        adam.lr = lr;
        let loss = net.loss_and_grad(&x, &y)?;
        if !loss.is_finite() {
            return Err(ExperimentError::Invalid(format!("loss diverged at iteration {iteration}")));
        }
        adam.step(net.params_mut())?;
        let row = LogRow { iteration, lr, loss };
        on_step(&row);
        log.push(row);
    }
    Ok((net, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberOutcome {
    pub id: String,
    pub seed: u64,
    pub network: String,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub params: usize,
    pub final_loss: f64,
}

/// Summary written as `train_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub labels: Vec<String>,
    pub samples: usize,
    pub members: Vec<MemberOutcome>,
    pub total_params: usize,
    pub model_size_bytes: u64,
    pub model_size: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub report: TrainReport,
    pub ensemble: PathBuf,
}

/// Train every member of `cfg` on the extracted features of `manifest` and
/// write `<member>.ckpt`, `<member>.log.csv`, `ensemble.json` and
/// `train_report.json` into `out_dir`. File names inside outputs are
/// relative to `out_dir`.
pub fn train_cmd(
    cfg: &TrainConfig,
    manifest: &Manifest,
    feature_dir: &Path,
    out_dir: &Path,
    mut progress: impl FnMut(&str, &LogRow),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let resolved = cfg.resolved();
    if manifest.is_empty() {
        return Err(ExperimentError::Invalid("training manifest is empty".into()));
    }
    let labels = manifest.labels();
    if labels.len() < 2 {
        return Err(ExperimentError::Invalid(format!("{} label(s); need at least 2", labels.len())));
    }
    let targets = manifest.label_indices(&labels)?;
    let clips = load_clip_features(manifest, feature_dir, &cfg.kinds)?;
    let plans = member_plans(cfg, |k| clips[0][&k].bands)?;

    let mut members = Vec::with_capacity(plans.len());
    let mut entries = Vec::with_capacity(plans.len());
    for plan in &plans {
        let seed = derive_seed(cfg.seed, &plan.id);
        let mut inputs = Vec::with_capacity(clips.len());
        let mut dims = None;
        for (clip, row) in clips.iter().zip(&manifest.rows) {
            let (values, d) = member_input(plan, clip)?;
            match dims {
                None => dims = Some(d),
                Some(first) if first != d => {
                    return Err(ExperimentError::Invalid(format!(
                        "{}: input {d:?} differs from {first:?}",
                        row.path.display()
                    )))
                }
                Some(_) => {}
            }
            inputs.push(values);
        }
        let spec = member_spec(&resolved, plan, labels.len());
        let network = spec.id();
        let (net, log) = train_member(
            &resolved,
            spec,
            &inputs,
            dims.expect("manifest is not empty"),
            &targets,
            seed,
            |row| progress(&plan.id, row),
        )?;
        let info = CheckpointInfo {
            step: resolved.iterations as u64,
            seed,
            labels: labels.clone(),
            config: serde_json::json!({ "train": resolved, "member": plan }),
        };
        let checkpoint = PathBuf::from(format!("{}.ckpt", plan.id));
        let log_file = PathBuf::from(format!("{}.log.csv", plan.id));
        super::write(&out_dir.join(&checkpoint), &Checkpoint::to_bytes(&net, &info)?)?;
        super::write(&out_dir.join(&log_file), log_csv(&log).as_bytes())?;
        entries.push(MemberEntry {
            checkpoint: checkpoint.clone(),
            kinds: plan.kinds.clone(),
            bands: plan.bands,
            head: plan.head,
        });
        members.push(MemberOutcome {
            id: plan.id.clone(),
            seed,
            network,
            checkpoint,
            log: log_file,
            params: net.param_count(),
            final_loss: log.last().map_or(f64::NAN, |r| r.loss),
        });
    }

    let ensemble = EnsembleManifest {
        labels: labels.clone(),
        members: entries,
    };
    let ensemble_path = out_dir.join("ensemble.json");
    super::write(&ensemble_path, &serde_json::to_vec_pretty(&ensemble)?)?;
    let total_params = members.iter().map(|m| m.params).sum();
    let size = model_size(total_params);
    let report = TrainReport {
        config: resolved,
        labels,
        samples: manifest.len(),
        members,
        total_params,
        model_size_bytes: size.bytes,
        model_size: size.human(),
    };
    super::write(&out_dir.join("train_report.json"), &serde_json::to_vec_pretty(&report)?)?;
    Ok(TrainOutput {
        report,
        ensemble: ensemble_path,
    })
}
