//! One test per acceptance criterion. Each prints a single `PASS`/`FAIL` line
//! straight to stdout (visible without `--nocapture`) and fails on `FAIL`.

#[path = "../../core/tests/support/feature_oracles.rs"]
mod feature_oracles;
#[path = "../../core/tests/support/fusion_oracles.rs"]
mod fusion_oracles;
#[path = "../../core/tests/support/gradcheck.rs"]
mod gradcheck;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use ascnet::models::Checkpoint;
use ascnet::{EvalReport, FeatureMap, Head};
use serde_json::Value;

/// Criteria run one at a time so wall-clock limits measure a single job.
static SERIAL: Mutex<()> = Mutex::new(());

const SIZE_1A_MIB: f64 = 18.9;
const SIZE_1A_TOL: f64 = 0.02;
const SIZE_1B_KIB: f64 = 468.0;
const SIZE_1B_EF_KIB: f64 = 491.0;
const SIZE_1B_TOL: f64 = 0.03;
const PARAMS_1A: u64 = 4_955_850;

const E2E_ITERATIONS: &str = "300";
const E2E_BATCH: &str = "2";
const E2E_SEED: &str = "1";
const MIN_ACCURACY: f64 = 0.9;
const MAX_LOG_LOSS: f64 = 0.5;
/// Log-Mel baseline of the first run on this corpus, seed and schedule.
const BASELINE_ACCURACY: f64 = 1.0;
const BASELINE_LOG_LOSS: f64 = 0.010896289636686741;
const BASELINE_LOG_LOSS_TOL: f64 = 0.01;

fn criterion(n: usize, name: &str, limit: Option<Duration>, body: impl FnOnce() -> String) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let (ok, detail) = match outcome {
        Ok(detail) => match limit {
            Some(l) if elapsed > l => (false, format!("{detail}; exceeded {l:?}")),
            _ => (true, detail),
        },
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, msg)
        }
    };
    let verdict = if ok { "PASS" } else { "FAIL" };
    let line = format!("{verdict} [{n}] {name} ({:.1}s): {detail}\n", elapsed.as_secs_f64());
    std::io::stdout().write_all(line.as_bytes()).unwrap();
    assert!(ok, "{}", line.trim_end());
}

fn ascnet(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_ascnet")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "ascnet {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn describe(args: &[&str]) -> Value {
    let mut all = vec!["describe-model", "--json"];
    all.extend_from_slice(args);
    serde_json::from_str(&ascnet(&all)).unwrap()
}

fn total_params(d: &Value) -> u64 {
    d["total_params"].as_u64().unwrap()
}

fn bytes(d: &Value) -> f64 {
    d["model_size_bytes"].as_u64().unwrap() as f64
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    ((value - target) / target).abs() <= tol
}

#[test]
fn criterion_1_model_sizes() {
    criterion(1, "model sizes", Some(Duration::from_secs(1)), || {
        let a = describe(&["--task", "1A"]);
        assert_eq!(total_params(&a), PARAMS_1A);
        let mib = bytes(&a) / (1024.0 * 1024.0);
        assert!(within(mib, SIZE_1A_MIB, SIZE_1A_TOL), "Task1A {mib} MiB");

        let b = describe(&["--task", "1B"]);
        let kib = bytes(&b) / 1024.0;
        assert!(within(kib, SIZE_1B_KIB, SIZE_1B_TOL), "Task1B {kib} KiB");

        let ef = describe(&["--task", "1B", "--kinds", "log_mel,cqt,gamma", "--fusion", "ef"]);
        let ef_kib = bytes(&ef) / 1024.0;
        assert!(within(ef_kib, SIZE_1B_EF_KIB, SIZE_1B_TOL), "Task1B EF {ef_kib} KiB");

        let r = describe(&["--task", "1A", "--kinds", "log_mel,cqt,gamma,mfcc", "--strategies", "spsmr"]);
        assert_eq!(r["members"].as_array().unwrap().len(), 4);
        assert_eq!(total_params(&r), 4 * total_params(&a));
        let t = describe(&["--task", "1A", "--strategies", "spsmt"]);
        assert_eq!(total_params(&t), total_params(&a));
        assert_eq!(t["model_size"], a["model_size"]);
        format!(
            "1A {} params = {}, 1B {}, 1B EF {}, SPSMR {} params, SPSMT {} params",
            total_params(&a),
            a["model_size"],
            b["model_size"],
            ef["model_size"],
            total_params(&r),
            total_params(&t)
        )
    });
}

#[test]
fn criterion_2_gradient_suite() {
    criterion(2, "gradient suite", Some(Duration::from_secs(60)), || {
        let mut worst: f64 = 0.0;
        for kind in gradcheck::LAYER_KINDS {
            let e = gradcheck::check_layer_kind(kind);
            assert!(e < gradcheck::MAX_REL_ERR, "{kind}: {e:e}");
            worst = worst.max(e);
        }
        let e = gradcheck::check_losses();
        assert!(e < gradcheck::MAX_REL_ERR, "losses: {e:e}");
        worst = worst.max(e);
        for head in [Head::Standard, Head::Spsmt] {
            let e = gradcheck::check_network(head, 0);
            assert!(e < gradcheck::MAX_REL_ERR, "network {head:?}: {e:e}");
            worst = worst.max(e);
        }
        format!(
            "{} layer kinds x {} seeds, losses and both heads; max relative error {worst:.2e}",
            gradcheck::LAYER_KINDS.len(),
            gradcheck::SEEDS
        )
    });
}

#[test]
fn criterion_3_fusion_oracles() {
    criterion(3, "fusion oracles", Some(Duration::from_secs(10)), || {
        fusion_oracles::representation_bundle_matches_brute_force_mean();
        fusion_oracles::subband_bundle_matches_brute_force_mean();
        fusion_oracles::frame_head_matches_brute_force_mean_over_frames();
        fusion_oracles::one_subband_and_one_member_equal_the_plain_network();
        fusion_oracles::one_deep_frame_makes_the_frame_head_equal_the_plain_head();
        format!(
            "representation, sub-band and frame means within {:e}; single sub-band and single frame bit-exact",
            fusion_oracles::ORACLE_TOL
        )
    });
}

#[test]
fn criterion_4_feature_conformance() {
    criterion(4, "feature conformance", Some(Duration::from_secs(60)), || {
        feature_oracles::stft_matches_brute_force_dft_on_random_frames();
        feature_oracles::stft_localizes_bin_centre_sines();
        feature_oracles::cqt_localizes_bin_centre_sines();
        feature_oracles::parseval_holds_per_frame();
        feature_oracles::frame_counts_agree_for_odd_lengths();
        feature_oracles::task1a_shapes_and_shared_frame_count();
        "DFT oracle 1e-5 on 10 frames, STFT and CQT sine localization, Parseval 1e-6, shared T, 858x{40,64,64,40}".into()
    });
}

struct Corpus {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Corpus {
    fn new(classes: &str, clips: &str, seed: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ascnet(&[
            "gen-synth",
            "--classes",
            classes,
            "--clips-per-class",
            clips,
            "--seed",
            seed,
            "--out",
            p(&root.join("corpus")),
        ]);
        Corpus { _dir: dir, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn extract(&self, split: &str, args: &[&str]) {
        let manifest = self.path(&format!("corpus/{split}.csv"));
        let features = self.path("feats");
        let mut all = vec!["extract", "--manifest", p(&manifest), "--out", p(&features)];
        all.extend_from_slice(args);
        ascnet(&all);
    }

    fn train(&self, out: &str, args: &[&str]) -> PathBuf {
        let out = self.path(out);
        let manifest = self.path("corpus/train.csv");
        let features = self.path("feats");
        let mut all = vec![
            "train",
            "--manifest",
            p(&manifest),
            "--features",
            p(&features),
            "--out",
            p(&out),
            "--extract",
            "--log-every",
            "0",
        ];
        all.extend_from_slice(args);
        ascnet(&all);
        out
    }

    fn evaluate(&self, run: &Path, args: &[&str]) -> EvalReport {
        let model = run.join("ensemble.json");
        let manifest = self.path("corpus/test.csv");
        let features = self.path("feats");
        let out = run.join("eval");
        let mut all = vec![
            "evaluate",
            "--model",
            p(&model),
            "--manifest",
            p(&manifest),
            "--features",
            p(&features),
            "--out",
            p(&out),
        ];
        all.extend_from_slice(args);
        ascnet(&all);
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap()
    }
}

#[test]
fn criterion_5_end_to_end_learning() {
    criterion(5, "end-to-end learning", Some(Duration::from_secs(600)), || {
        let corpus = Corpus::new("3", "20", "0");
        let kinds = ["--task", "1B", "--kinds", "log_mel,cqt,gamma"];
        corpus.extract("train", &kinds);
        corpus.extract("test", &kinds);

        let common = ["--task", "1B", "--iterations", E2E_ITERATIONS, "--batch-size", E2E_BATCH, "--seed", E2E_SEED];
        let mut lm_args = common.to_vec();
        lm_args.extend(["--kinds", "log_mel"]);
        let lm = corpus.evaluate(&corpus.train("log_mel", &lm_args), &[]);

        let mut ef_args = common.to_vec();
        ef_args.extend(["--kinds", "log_mel,cqt,gamma", "--fusion", "ef", "--strategies", "spsmt"]);
        let ef = corpus.evaluate(&corpus.train("ef_spsmt", &ef_args), &[]);

        assert_eq!(lm.samples, 18);
        assert!(lm.macro_accuracy >= MIN_ACCURACY, "Log-Mel accuracy {}", lm.macro_accuracy);
        assert!(lm.log_loss <= MAX_LOG_LOSS, "Log-Mel log loss {}", lm.log_loss);
        assert!(
            ef.macro_accuracy >= lm.macro_accuracy,
            "EF+SPSMT {} < Log-Mel {}",
            ef.macro_accuracy,
            lm.macro_accuracy
        );
        assert_eq!(lm.macro_accuracy, BASELINE_ACCURACY, "baseline accuracy moved");
        assert!(
            (lm.log_loss - BASELINE_LOG_LOSS).abs() <= BASELINE_LOG_LOSS_TOL,
            "baseline log loss moved: {}",
            lm.log_loss
        );
        format!(
            "Log-Mel acc {} loss {}; EF+SPSMT acc {} loss {}",
            lm.macro_accuracy, lm.log_loss, ef.macro_accuracy, ef.log_loss
        )
    });
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_6_reproducibility() {
    criterion(6, "reproducibility", None, || {
        let corpus = Corpus::new("3", "4", "2");
        let args = [
            "--task",
            "1B",
            "--kinds",
            "log_mel,cqt",
            "--strategies",
            "spsmr,spsmt",
            "--iterations",
            "12",
            "--batch-size",
            "4",
            "--seed",
            "9",
        ];
        corpus.extract("test", &["--task", "1B", "--kinds", "log_mel,cqt"]);
        let a = corpus.train("run_a", &args);
        let b = corpus.train("run_b", &args);
        corpus.evaluate(&a, &["--run-id", "r"]);
        corpus.evaluate(&b, &["--run-id", "r"]);
        let (fa, fb) = (files_under(&a), files_under(&b));
        assert_eq!(fa.len(), fb.len());
        for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
            assert_eq!(na, nb);
            assert!(ba == bb, "{na} differs");
        }
        let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names.iter().filter(|n| n.ends_with(".ckpt")).count(), 2, "{names:?}");
        format!("{} files byte-identical across two runs: {}", fa.len(), names.join(", "))
    });
}

#[test]
fn criterion_7_format_round_trips() {
    criterion(7, "format round-trips", None, || {
        let corpus = Corpus::new("2", "2", "4");
        let run = corpus.train(
            "run",
            &[
                "--task",
                "1A",
                "--kinds",
                "log_mel,cqt,gamma,mfcc",
                "--strategies",
                "spsmr",
                "--iterations",
                "1",
                "--batch-size",
                "2",
            ],
        );
        let (mut spsf, mut ckpt) = (0, 0);
        for (name, bytes) in files_under(&corpus.path("feats")) {
            let (map, meta) = FeatureMap::from_bytes(&bytes).unwrap();
            let saved = map.to_bytes(&meta).unwrap();
            assert!(saved == bytes, "{name}");
            let (again, meta2) = FeatureMap::from_bytes(&saved).unwrap();
            assert!(again.to_bytes(&meta2).unwrap() == bytes, "{name}");
            spsf += 1;
        }
        for (name, bytes) in files_under(&run).into_iter().filter(|(n, _)| n.ends_with(".ckpt")) {
            let (net, info) = Checkpoint::from_bytes(&bytes).unwrap();
            let saved = Checkpoint::to_bytes(&net, &info).unwrap();
            assert!(saved == bytes, "{name}");
            let (net2, info2) = Checkpoint::from_bytes(&saved).unwrap();
            assert!(Checkpoint::to_bytes(&net2, &info2).unwrap() == bytes, "{name}");
            ckpt += 1;
        }
        // One training clip per class, four representations each.
        assert_eq!((spsf, ckpt), (2 * 4, 4));
        format!("{spsf} feature files and {ckpt} checkpoints byte-identical after save, load, save")
    });
}

#[test]
fn criterion_8_lr_schedule() {
    criterion(8, "lr schedule", None, || {
        let corpus = Corpus::new("2", "1", "6");
        let run = corpus.train(
            "run",
            &[
                "--task",
                "1B",
                "--iterations",
                "401",
                "--batch-size",
                "1",
                "--duration-s",
                "1",
                "--mixup-alpha",
                "0",
            ],
        );
        let log = std::fs::read_to_string(run.join("log_mel.log.csv")).unwrap();
        assert_eq!(log.lines().next(), Some("iteration,lr,loss"));
        let lr_at = |it: &str| {
            log.lines()
                .find_map(|l| {
                    let mut f = l.split(',');
                    (f.next() == Some(it)).then(|| f.next().unwrap().to_string())
                })
                .unwrap()
        };
        let got = [lr_at("0"), lr_at("200"), lr_at("400")];
        assert_eq!(got, ["0.001", "0.00091", "0.0008281"]);
        format!("lr at 0/200/400 = {}", got.join(" / "))
    });
}
