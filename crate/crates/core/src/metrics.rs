//! Macro-average accuracy, multiclass log loss and model size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategies::ScoreVector;

/// Probabilities are clamped to `[LOG_LOSS_CLAMP, 1 - LOG_LOSS_CLAMP]`.
pub const LOG_LOSS_CLAMP: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no labels to score")]
    Empty,
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("class {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check_lengths(predictions: usize, labels: &[usize], n_classes: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    if predictions != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions,
            labels: labels.len(),
        });
    }
    if let Some(&class) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(MetricsError::ClassOutOfRange { class, n_classes });
    }
    Ok(())
}

/// Per-class recall; `None` for classes with no labelled samples.
pub fn per_class_accuracy(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<Vec<Option<f64>>> {
    check_lengths(predictions.len(), labels, n_classes)?;
    let mut correct = vec![0usize; n_classes];
    let mut total = vec![0usize; n_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        total[l] += 1;
        if p == l {
            correct[l] += 1;
        }
    }
    Ok(correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| (t > 0).then(|| c as f64 / t as f64))
        .collect())
}

/// Mean of per-class recalls over the classes present in `labels`.
pub fn macro_accuracy(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<f64> {
    let recalls: Vec<f64> = per_class_accuracy(predictions, labels, n_classes)?.into_iter().flatten().collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Mean of `-ln p(true class)`. Per-sample terms are summed in sorted order,
/// so the result does not depend on sample order.
pub fn log_loss(probs: &[ScoreVector], labels: &[usize]) -> Result<f64> {
    let n_classes = probs.first().map_or(0, ScoreVector::len);
    check_lengths(probs.len(), labels, n_classes)?;
    let mut terms = Vec::with_capacity(labels.len());
    for (s, &l) in probs.iter().zip(labels) {
        if s.len() != n_classes {
            return Err(MetricsError::ClassOutOfRange { class: l, n_classes: s.len() });
        }
        let p = s.probs()[l].clamp(LOG_LOSS_CLAMP, 1.0 - LOG_LOSS_CLAMP);
        terms.push(-p.ln());
    }
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// `N x N` counts, rows are true classes.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    check_lengths(predictions.len(), labels, n_classes)?;
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= n_classes {
            return Err(MetricsError::ClassOutOfRange { class: p, n_classes });
        }
        m[l][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSize {
    pub params: usize,
    pub bytes: u64,
}

impl ModelSize {
    pub fn from_params(params: usize) -> Self {
        ModelSize {
            params,
            bytes: params as u64 * 4,
        }
    }

    pub fn mib(&self) -> f64 {
        self.bytes as f64 / (1024.0 * 1024.0)
    }

    pub fn kib(&self) -> f64 {
        self.bytes as f64 / 1024.0
    }

    /// `18.9 MiB`, or KiB below one MiB.
    pub fn human(&self) -> String {
        if self.bytes >= 1024 * 1024 {
            format!("{:.1} MiB", self.mib())
        } else {
            format!("{:.1} KiB", self.kib())
        }
    }
}

impl std::ops::Add for ModelSize {
    type Output = ModelSize;

    fn add(self, rhs: ModelSize) -> ModelSize {
        ModelSize::from_params(self.params + rhs.params)
    }
}

/// Trainable parameters (convolution, BN affine, dense) at four bytes each.
/// BN running statistics and optimizer state are not counted.
pub fn model_size(params: usize) -> ModelSize {
    ModelSize::from_params(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub model: String,
    pub labels: Vec<String>,
    pub samples: usize,
    pub macro_accuracy: f64,
    pub log_loss: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub confusion: Vec<Vec<usize>>,
    pub model_size_bytes: u64,
    pub model_size: String,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn from_scores(
        run_id: &str,
        model: &str,
        labels: Vec<String>,
        scores: &[ScoreVector],
        truth: &[usize],
        size: ModelSize,
    ) -> Result<Self> {
        let n = labels.len();
        let predictions: Vec<usize> = scores.iter().map(ScoreVector::argmax).collect();
        Ok(EvalReport {
            run_id: run_id.into(),
            model: model.into(),
            samples: truth.len(),
            macro_accuracy: macro_accuracy(&predictions, truth, n)?,
            log_loss: log_loss(scores, truth)?,
            per_class_accuracy: per_class_accuracy(&predictions, truth, n)?,
            confusion: confusion_matrix(&predictions, truth, n)?,
            model_size_bytes: size.bytes,
            model_size: size.human(),
            labels,
            config: serde_json::Value::Null,
        })
    }

    pub const CSV_HEADER: &'static str = "run_id,model,macro_accuracy,log_loss,model_size_bytes,model_size";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.run_id, self.model, self.macro_accuracy, self.log_loss, self.model_size_bytes, self.model_size
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}
