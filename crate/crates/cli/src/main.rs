use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ascnet::experiment::{
    describe_model, evaluate_cmd, extract_cmd, fuse, gen_synth, parse_fusion, parse_strategy, parse_task, train_cmd,
    ExtractOptions, Manifest, TrainConfig,
};
use ascnet::features::FeatureKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ascnet", version, about = "Acoustic scene classification with spectrogram processing strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus with train/test manifests.
    GenSynth {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        clips_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract feature maps for every clip of a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Train the members of a configuration.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Extract missing or stale features before training.
        #[arg(long)]
        extract: bool,
        /// Print the loss every this many iterations (0 = silent).
        #[arg(long, default_value_t = 50)]
        log_every: usize,
    },
    /// Score a checkpoint or ensemble manifest on a labelled manifest.
    Evaluate {
        /// Checkpoint (`.ckpt`) or ensemble manifest (`.json`).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Directory receiving `report.json` and `report.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "eval")]
        run_id: String,
    },
    /// Print the layer table and size of a configuration.
    DescribeModel {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Merge checkpoints and ensemble manifests into one ensemble manifest.
    Fuse {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

/// A TOML/JSON config file plus per-field overrides.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// 1A or 1B.
    #[arg(long)]
    task: Option<String>,
    /// Comma-separated: log_mel, cqt, gamma, mfcc.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<String>>,
    /// single, ef, mf[:block] or lf.
    #[arg(long)]
    fusion: Option<String>,
    /// Comma-separated: spsmr, spsmt, spsmf:<f>[:<overlap>].
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    decay_every: Option<usize>,
    #[arg(long)]
    mixup_alpha: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_s: Option<f64>,
}

impl ConfigArgs {
    /// Config for a training or description run; combination rules are enforced.
    fn resolve(&self) -> Result<TrainConfig> {
        let cfg = self.merged()?;
        cfg.validate()?;
        Ok(cfg.resolved())
    }

    fn merged(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        if let Some(t) = &self.task {
            cfg.task = parse_task(t)?;
        }
        if let Some(kinds) = &self.kinds {
            cfg.kinds = kinds.iter().map(|k| k.parse::<FeatureKind>()).collect::<Result<_, _>>()?;
        }
        if let Some(f) = &self.fusion {
            cfg.fusion = parse_fusion(f)?;
        }
        if let Some(s) = &self.strategies {
            cfg.strategies = s.iter().map(|s| parse_strategy(s)).collect::<Result<_, _>>()?;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        set!(batch_size, iterations, lr, lr_decay, decay_every, mixup_alpha, dropout, seed, duration_s);
        Ok(cfg)
    }
}

fn extract_options(cfg: &TrainConfig, threads: usize) -> ExtractOptions {
    let mut opts = ExtractOptions::new(cfg.feature_config(), cfg.kinds.clone());
    opts.duration_s = cfg.duration_s;
    opts.threads = threads;
    opts
}

fn run_extract(manifest: &Manifest, opts: &ExtractOptions, out: &Path) -> Result<()> {
    let summary = extract_cmd(manifest, opts, out)?;
    eprintln!("extract: {} written, {} up to date, {} failed", summary.written.len(), summary.skipped, summary.failed.len());
    for (path, e) in &summary.failed {
        eprintln!("  {}: {e}", path.display());
    }
    summary.into_result()?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenSynth {
            classes,
            clips_per_class,
            seed,
            out,
        } => {
            let corpus = gen_synth(classes, clips_per_class, seed, &out)?;
            println!(
                "wrote {} clips: {} train ({}), {} test ({})",
                corpus.files.len(),
                corpus.train.len(),
                corpus.train_path.display(),
                corpus.test.len(),
                corpus.test_path.display()
            );
        }
        Command::Extract {
            manifest,
            out,
            config,
            threads,
        } => {
            let cfg = config.merged()?;
            let manifest = Manifest::load(&manifest)?;
            run_extract(&manifest, &extract_options(&cfg, threads), &out)?;
        }
        Command::Train {
            manifest,
            features,
            out,
            config,
            extract,
            log_every,
        } => {
            let cfg = config.resolve()?;
            let manifest = Manifest::load(&manifest)?;
            if extract {
                run_extract(&manifest, &extract_options(&cfg, 0), &features)?;
            }
            let output = train_cmd(&cfg, &manifest, &features, &out, |id, row| {
                if log_every > 0 && (row.iteration % log_every == 0 || row.iteration + 1 == cfg.iterations) {
                    eprintln!("{id} it {:>6} lr {} loss {:.5}", row.iteration, row.lr, row.loss);
                }
            })?;
            for m in &output.report.members {
                println!("{}: {} params, final loss {:.5}", m.id, m.params, m.final_loss);
            }
            println!("ensemble: {}", output.ensemble.display());
        }
        Command::Evaluate {
            model,
            manifest,
            features,
            out,
            run_id,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let report = evaluate_cmd(&model, &manifest, &features, &run_id)?;
            std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            let json = out.join("report.json");
            std::fs::write(&json, serde_json::to_vec_pretty(&report)?).with_context(|| json.display().to_string())?;
            let csv = out.join("report.csv");
            std::fs::write(&csv, report.to_csv()).with_context(|| csv.display().to_string())?;
            println!(
                "{}: macro accuracy {:.4}, log loss {:.4}, size {}",
                report.model, report.macro_accuracy, report.log_loss, report.model_size
            );
        }
        Command::DescribeModel { config, json } => {
            let desc = describe_model(&config.resolve()?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&desc)?);
            } else {
                for m in &desc.members {
                    println!("{} ({}, {})", m.id, m.network, m.size);
                    for row in &m.layers {
                        println!("  {:<10} {:<28} {:>10}", row.stage, row.layer, row.params);
                    }
                    println!("  {:<39} {:>10}", "total", m.params);
                }
                println!("model: {} params, {} bytes ({})", desc.total_params, desc.model_size_bytes, desc.model_size);
            }
        }
        Command::Fuse { out, inputs } => {
            if inputs.is_empty() {
                bail!("no inputs");
            }
            let fused = fuse(&inputs, &out)?;
            println!("{}: {} members", out.display(), fused.members.len());
        }
    }
    Ok(())
}
