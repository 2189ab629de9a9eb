use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::{member_plans, member_spec};
use super::{load_clip_features, ExperimentError, Manifest, Result, TrainConfig};
use crate::features::{FeatureKind, FeatureMap};
use crate::metrics::{model_size, EvalReport};
use crate::models::{Architecture, Checkpoint, CheckpointInfo, LayerRow, Network};
use crate::strategies::{mean_scores, EnsembleBundle, EnsembleManifest, Member, MemberEntry, MemberPlan, ScoreVector};

/// Clips scored per forward pass during evaluation.
const EVAL_BATCH: usize = 8;

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn load_checkpoint(path: &Path) -> Result<(Network<f32>, CheckpointInfo)> {
    Ok(Checkpoint::from_bytes(&super::read(path)?)?)
}

fn entry_from_checkpoint(path: &Path, info: &CheckpointInfo) -> Result<MemberEntry> {
    let plan: MemberPlan = info
        .config
        .get("member")
        .cloned()
        .map(serde_json::from_value)
        .transpose()?
        .ok_or_else(|| ExperimentError::Invalid(format!("{} does not record its member plan", path.display())))?;
    Ok(MemberEntry {
        checkpoint: path.to_path_buf(),
        kinds: plan.kinds,
        bands: plan.bands,
        head: plan.head,
    })
}

/// Read an ensemble manifest and make its checkpoint paths absolute.
pub fn load_ensemble(path: &Path) -> Result<EnsembleManifest> {
    let mut m: EnsembleManifest = serde_json::from_slice(&super::read(path)?)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for e in &mut m.members {
        if e.checkpoint.is_relative() {
            e.checkpoint = base.join(&e.checkpoint);
        }
    }
    Ok(m)
}

/// Members as an ensemble manifest: `.json` files are read as manifests,
/// anything else as a single checkpoint.
fn as_manifest(path: &Path) -> Result<EnsembleManifest> {
    if is_json(path) {
        return load_ensemble(path);
    }
    let (_, info) = load_checkpoint(path)?;
    Ok(EnsembleManifest {
        members: vec![entry_from_checkpoint(path, &info)?],
        labels: info.labels,
    })
}

/// Load a checkpoint or ensemble manifest. Returns the bundle, its labels and
/// a path-free description of every member.
pub fn load_bundle(path: &Path) -> Result<(EnsembleBundle, Vec<String>, serde_json::Value)> {
    let manifest = as_manifest(path)?;
    let mut members = Vec::with_capacity(manifest.members.len());
    let mut described = Vec::with_capacity(manifest.members.len());
    for entry in &manifest.members {
        let (mut net, info) = load_checkpoint(&entry.checkpoint)?;
        if !info.labels.is_empty() && info.labels != manifest.labels {
            return Err(ExperimentError::Invalid(format!(
                "{} was trained on labels {:?}, ensemble declares {:?}",
                entry.checkpoint.display(),
                info.labels,
                manifest.labels
            )));
        }
        net.set_head(entry.head);
        described.push(serde_json::json!({
            "network": net.spec.id(),
            "kinds": entry.kinds,
            "bands": entry.bands,
            "head": entry.head,
            "params": net.param_count(),
            "train": info.config.get("train"),
        }));
        members.push(Member::new(net, entry.kinds.clone(), entry.bands)?);
    }
    let bundle = EnsembleBundle::new(members)?;
    if bundle.n_classes() != manifest.labels.len() {
        return Err(ExperimentError::Invalid(format!(
            "{} labels for {}-class networks",
            manifest.labels.len(),
            bundle.n_classes()
        )));
    }
    Ok((bundle, manifest.labels, serde_json::Value::Array(described)))
}

fn member_name(m: &Member) -> String {
    let kinds: Vec<&str> = m.kinds.iter().map(|k| k.name()).collect();
    let mut s = format!("{}[{}", m.network.spec.id(), kinds.join("+"));
    if let Some((lo, hi)) = m.bands {
        s.push_str(&format!(" {lo}..{hi}"));
    }
    s.push(']');
    s
}

/// Score every clip with every member and average per clip.
pub fn bundle_scores(bundle: &EnsembleBundle, clips: &[BTreeMap<FeatureKind, FeatureMap>]) -> Result<Vec<ScoreVector>> {
    let mut per_member: Vec<Vec<ScoreVector>> = Vec::with_capacity(bundle.members.len());
    for member in &bundle.members {
        let mut scores = Vec::with_capacity(clips.len());
        for chunk in clips.chunks(EVAL_BATCH) {
            let refs: Vec<&BTreeMap<FeatureKind, FeatureMap>> = chunk.iter().collect();
            let x = member.batch_input(&refs)?;
            let probs = member.network.predict(&x)?;
            scores.extend(ScoreVector::from_batch(&probs)?);
        }
        per_member.push(scores);
    }
    (0..clips.len())
        .map(|i| {
            let leaves: Vec<ScoreVector> = per_member.iter().map(|s| s[i].clone()).collect();
            Ok(mean_scores(&leaves)?)
        })
        .collect()
}

/// Eval-mode inference over `manifest` with a checkpoint or ensemble manifest.
pub fn evaluate_cmd(model: &Path, manifest: &Manifest, feature_dir: &Path, run_id: &str) -> Result<EvalReport> {
    let (bundle, labels, described) = load_bundle(model)?;
    let truth = manifest.label_indices(&labels)?;
    let clips = load_clip_features(manifest, feature_dir, &bundle.kinds())?;
    let scores = bundle_scores(&bundle, &clips)?;
    let name = bundle.members.iter().map(member_name).collect::<Vec<_>>().join(" + ");
    let mut report = EvalReport::from_scores(run_id, &name, labels, &scores, &truth, model_size(bundle.param_count()))?;
    report.config = serde_json::json!({ "members": described, "eval_batch": EVAL_BATCH });
    Ok(report)
}

/// Merge checkpoints and ensemble manifests into one ensemble manifest
/// written to `out`. Checkpoint paths are stored relative to `out` when they
/// live below its directory.
pub fn fuse(inputs: &[PathBuf], out: &Path) -> Result<EnsembleManifest> {
    if inputs.is_empty() {
        return Err(ExperimentError::Invalid("nothing to fuse".into()));
    }
    let abs = |p: &Path| std::path::absolute(p).map_err(super::io_err(p));
    let out_dir = abs(out)?.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut labels: Option<Vec<String>> = None;
    let mut members = Vec::new();
    for input in inputs {
        let m = as_manifest(input)?;
        match &labels {
            None => labels = Some(m.labels.clone()),
            Some(l) if *l != m.labels => {
                return Err(ExperimentError::Invalid(format!(
                    "{} has labels {:?}, expected {l:?}",
                    input.display(),
                    m.labels
                )))
            }
            Some(_) => {}
        }
        for mut e in m.members {
            let full = abs(&e.checkpoint)?;
            e.checkpoint = full.strip_prefix(&out_dir).map(Path::to_path_buf).unwrap_or(full);
            members.push(e);
        }
    }
    let fused = EnsembleManifest {
        labels: labels.expect("at least one input"),
        members,
    };
    super::write(out, &serde_json::to_vec_pretty(&fused)?)?;
    Ok(fused)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDescription {
    pub id: String,
    pub network: String,
    pub kinds: Vec<FeatureKind>,
    pub bands: Option<(usize, usize)>,
    pub params: usize,
    pub size_bytes: u64,
    pub size: String,
    pub layers: Vec<LayerRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub config: TrainConfig,
    pub members: Vec<MemberDescription>,
    pub total_params: usize,
    pub model_size_bytes: u64,
    pub model_size: String,
}

/// Layer table and parameter count of every member `cfg` would train, with
/// the task's class count.
pub fn describe_model(cfg: &TrainConfig) -> Result<ModelDescription> {
    let resolved = cfg.resolved();
    let features = resolved.feature_config();
    let plans = member_plans(&resolved, |k| features.n_bands.get(k))?;
    let n_classes = match cfg.task {
        Architecture::Task1A => 10,
        Architecture::Task1B => 3,
    };
    let mut members = Vec::with_capacity(plans.len());
    for plan in &plans {
        let net = Network::<f32>::build(member_spec(&resolved, plan, n_classes))?;
        let size = model_size(net.param_count());
        members.push(MemberDescription {
            id: plan.id.clone(),
            network: net.spec.id(),
            kinds: plan.kinds.clone(),
            bands: plan.bands,
            params: size.params,
            size_bytes: size.bytes,
            size: size.human(),
            layers: net.describe(),
        });
    }
    let total = model_size(members.iter().map(|m| m.params).sum());
    Ok(ModelDescription {
        config: resolved,
        members,
        total_params: total.params,
        model_size_bytes: total.bytes,
        model_size: total.human(),
    })
}
