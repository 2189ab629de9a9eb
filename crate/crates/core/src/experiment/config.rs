use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureConfig, FeatureKind};
use crate::models::{Architecture, Fusion};
use crate::strategies::{compose, Composition, Strategy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse {}: {detail}", path.display())]
    Parse { path: PathBuf, detail: String },
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Learning rate at `iteration` under a stepwise exponential decay, rounded to
/// twelve significant digits so logged values read exactly (e.g. `0.00091`).
pub fn lr_at(initial: f64, decay: f64, every: usize, iteration: usize) -> f64 {
    let steps = (iteration / every.max(1)) as i32;
    let raw = initial * decay.powi(steps);
    format!("{raw:.11e}").parse().expect("formatted float parses")
}

/// `spsmr`, `spsmt` or `spsmf:<f>[:<overlap>]`.
pub fn parse_strategy(s: &str) -> Result<Strategy, ConfigError> {
    let unknown = || ConfigError::Unknown {
        what: "strategy",
        value: s.to_string(),
    };
    let mut parts = s.split(':');
    let name = parts.next().unwrap_or_default().to_ascii_lowercase();
    let mut num = || -> Result<Option<usize>, ConfigError> {
        parts.next().map(|p| p.parse().map_err(|_| unknown())).transpose()
    };
    let strategy = match name.as_str() {
        "spsmr" => Strategy::Spsmr,
        "spsmt" => Strategy::Spsmt,
        "spsmf" => {
            let f = num()?.ok_or_else(unknown)?;
            let overlap = num()?.unwrap_or(0);
            Strategy::Spsmf { f, overlap }
        }
        _ => return Err(unknown()),
    };
    if num()?.is_some() {
        return Err(unknown());
    }
    Ok(strategy)
}

/// `single`, `ef`, `lf`, `mf` or `mf:<block>`.
pub fn parse_fusion(s: &str) -> Result<Fusion, ConfigError> {
    let lower = s.to_ascii_lowercase();
    let unknown = || ConfigError::Unknown {
        what: "fusion",
        value: s.to_string(),
    };
    match lower.split_once(':') {
        None => match lower.as_str() {
            "single" | "none" => Ok(Fusion::Single),
            "ef" | "early" => Ok(Fusion::Early),
            "mf" | "middle" => Ok(Fusion::DEFAULT_MIDDLE),
            "lf" | "late" => Ok(Fusion::Late),
            _ => Err(unknown()),
        },
        Some(("mf" | "middle", block)) => Ok(Fusion::Middle {
            after_block: block.parse().map_err(|_| unknown())?,
        }),
        Some(_) => Err(unknown()),
    }
}

/// `1a`, `1b`, `task1a` or `task1b`.
pub fn parse_task(s: &str) -> Result<Architecture, ConfigError> {
    match s.to_ascii_lowercase().trim_start_matches("task") {
        "1a" => Ok(Architecture::Task1A),
        "1b" => Ok(Architecture::Task1B),
        _ => Err(ConfigError::Unknown {
            what: "task",
            value: s.to_string(),
        }),
    }
}

/// A training run. Every field has a default, and the resolved value of every
/// field is stored with the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Architecture,
    pub kinds: Vec<FeatureKind>,
    pub fusion: Fusion,
    pub strategies: Vec<Strategy>,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub mixup_alpha: f64,
    pub dropout: f64,
    pub seed: u64,
    pub duration_s: f64,
    /// Extraction settings; `None` resolves to the task's default.
    pub features: Option<FeatureConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Architecture::Task1A,
            kinds: vec![FeatureKind::LogMel],
            fusion: Fusion::Single,
            strategies: Vec::new(),
            batch_size: 64,
            iterations: 12000,
            lr: 0.001,
            lr_decay: 0.91,
            decay_every: 200,
            mixup_alpha: 0.2,
            dropout: 0.5,
            seed: 0,
            duration_s: 10.0,
            features: None,
        }
    }
}

impl TrainConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, super::ExperimentError> {
        let bytes = super::read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        let cfg: TrainConfig = parsed.map_err(|detail| ConfigError::Parse {
            path: path.to_path_buf(),
            detail,
        })?;
        Ok(cfg)
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        lr_at(self.lr, self.lr_decay, self.decay_every, iteration)
    }

    /// The extraction settings this run expects. Fused networks need one band
    /// count across representations.
    pub fn feature_config(&self) -> FeatureConfig {
        match &self.features {
            Some(f) => f.clone(),
            None if self.task == Architecture::Task1B || self.fusion != Fusion::Single => FeatureConfig::common_64(),
            None => FeatureConfig::task1a(),
        }
    }

    /// Fill in `features` so the stored config has no implicit parts.
    pub fn resolved(&self) -> Self {
        TrainConfig {
            features: Some(self.feature_config()),
            ..self.clone()
        }
    }

    pub fn composition(&self) -> Result<Composition, ConfigError> {
        if self.strategies.is_empty() {
            return Ok(Composition::default());
        }
        compose(&self.strategies).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.batch_size == 0 || self.iterations == 0 || self.decay_every == 0 {
            return bad("batch_size, iterations and decay_every must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0) || !(self.duration_s > 0.0) {
            return bad("lr, lr_decay and duration_s must be positive".into());
        }
        if !(self.mixup_alpha >= 0.0) {
            return bad(format!("mixup_alpha {} is negative", self.mixup_alpha));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.kinds.is_empty() {
            return bad("no representation selected".into());
        }
        let mut kinds = self.kinds.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.kinds.len() {
            return bad("representation listed twice".into());
        }
        let c = self.composition()?;
        if self.fusion != Fusion::Single {
            if self.kinds.len() < 2 {
                return bad(format!("{} fusion needs at least two representations", self.fusion.name()));
            }
            if c.spsmr || c.spsmf.is_some() {
                return bad(format!("{} fusion combines only with SPSMT", self.fusion.name()));
            }
        } else if !c.spsmr && self.kinds.len() != 1 {
            return bad(format!("{} representations need SPSMR or a fusion mode", self.kinds.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepwise_schedule_logs_exact_values() {
        assert_eq!(lr_at(0.001, 0.91, 200, 0).to_string(), "0.001");
        assert_eq!(lr_at(0.001, 0.91, 200, 199).to_string(), "0.001");
        assert_eq!(lr_at(0.001, 0.91, 200, 200).to_string(), "0.00091");
        assert_eq!(lr_at(0.001, 0.91, 200, 400).to_string(), "0.0008281");
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_strategy("SPSMF:4:2").unwrap(), Strategy::Spsmf { f: 4, overlap: 2 });
        assert_eq!(parse_strategy("spsmf:4").unwrap(), Strategy::Spsmf { f: 4, overlap: 0 });
        assert!(parse_strategy("spsmf").is_err());
        assert!(parse_strategy("spsmt:1").is_err());
        assert_eq!(parse_fusion("mf:2").unwrap(), Fusion::Middle { after_block: 2 });
        assert_eq!(parse_fusion("MF").unwrap(), Fusion::DEFAULT_MIDDLE);
        assert_eq!(parse_task("1B").unwrap(), Architecture::Task1B);
    }

    #[test]
    fn toml_defaults_and_unknown_fields() {
        let cfg: TrainConfig = toml::from_str("task = \"TASK1B\"\niterations = 300\n").unwrap();
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.iterations, 300);
        assert_eq!(cfg.feature_config(), FeatureConfig::common_64());
        assert!(toml::from_str::<TrainConfig>("batch = 3\n").is_err());
        let full = toml::to_string(&cfg.resolved()).unwrap();
        assert_eq!(toml::from_str::<TrainConfig>(&full).unwrap(), cfg.resolved());
    }

    #[test]
    fn combination_rules() {
        let mut cfg = TrainConfig {
            kinds: vec![FeatureKind::LogMel, FeatureKind::Cqt],
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.strategies = vec![Strategy::Spsmr];
        cfg.validate().unwrap();
        cfg.fusion = Fusion::Early;
        assert!(cfg.validate().is_err());
        cfg.strategies = vec![Strategy::Spsmt];
        cfg.validate().unwrap();
    }
}
