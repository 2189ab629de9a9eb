use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{derive_seed, ExperimentError, Manifest, ManifestRow, Result};
use crate::audio::{encode_wav_pcm16, AudioClip};

pub const SYNTH_RATE: u32 = 44100;
pub const CLIP_SECONDS: f64 = 10.0;

const TONE_LO: f64 = 150.0;
const TONE_HI: f64 = 6000.0;
const BAND_LO: f64 = 300.0;
const BAND_HI: f64 = 9000.0;

/// Fixed signature of one synthetic scene.
#[derive(Debug, Clone)]
struct ClassRecipe {
    tones: [f64; 2],
    band_center: f64,
    am_rate: f64,
    click_rate: f64,
}

fn log_grid(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if n == 1 {
        return (lo * hi).sqrt();
    }
    lo * (hi / lo).powf(i as f64 / (n - 1) as f64)
}

fn recipes(n_classes: usize, seed: u64) -> Vec<ClassRecipe> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth-classes"));
    let mut tone_slots: Vec<usize> = (0..2 * n_classes).collect();
    tone_slots.shuffle(&mut rng);
    let mut band_slots: Vec<usize> = (0..n_classes).collect();
    band_slots.shuffle(&mut rng);
    let mut rhythm_slots: Vec<usize> = (0..n_classes).collect();
    rhythm_slots.shuffle(&mut rng);
    (0..n_classes)
        .map(|k| ClassRecipe {
            tones: [
                log_grid(TONE_LO, TONE_HI, 2 * n_classes, tone_slots[2 * k]),
                log_grid(TONE_LO, TONE_HI, 2 * n_classes, tone_slots[2 * k + 1]),
            ],
            band_center: log_grid(BAND_LO, BAND_HI, n_classes, band_slots[k]),
            am_rate: log_grid(0.5, 8.0, n_classes, rhythm_slots[k]),
            click_rate: log_grid(1.0, 12.0, n_classes, (rhythm_slots[k] + n_classes / 2) % n_classes),
        })
        .collect()
}

/// White noise restricted to one third of an octave around `center`.
fn band_noise(rng: &mut ChaCha8Rng, n: usize, rate: f64, center: f64) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let (lo, hi) = (center * 2f64.powf(-1.0 / 6.0), center * 2f64.powf(1.0 / 6.0));
    for (i, v) in buf.iter_mut().enumerate() {
        let freq = i.min(n - i) as f64 * rate / n as f64;
        if freq < lo || freq > hi {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-12);
    out.into_iter().map(|v| v / rms).collect()
}

/// Clip `index` of class `class`. Peak-normalized to 0.9.
pub fn synth_clip(n_classes: usize, class: usize, index: usize, seed: u64) -> AudioClip {
    let recipe = &recipes(n_classes, seed)[class];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("synth-clip-{class}-{index}")));
    let rate = f64::from(SYNTH_RATE);
    let n = (CLIP_SECONDS * rate).round() as usize;

    let mut x = vec![0.0f64; n];
    for &f0 in &recipe.tones {
        let f = f0 * rng.random_range(0.98..1.02);
        let amp = rng.random_range(0.15..0.3);
        let phase = rng.random_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            *v += amp * (2.0 * PI * f * i as f64 / rate + phase).sin();
        }
    }

    let center = recipe.band_center * rng.random_range(0.97..1.03);
    let band = band_noise(&mut rng, n, rate, center);
    let am = recipe.am_rate * rng.random_range(0.9..1.1);
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let band_amp = rng.random_range(0.08..0.15);
    for (i, v) in x.iter_mut().enumerate() {
        let env = 0.5 * (1.0 + (2.0 * PI * am * i as f64 / rate + am_phase).sin());
        *v += band_amp * env * band[i];
    }

    let period = rate / (recipe.click_rate * rng.random_range(0.9..1.1));
    let decay = 0.004 * rate;
    let click_amp = rng.random_range(0.3..0.5);
    let mut onset = rng.random_range(0.0..period);
    while (onset as usize) < n {
        let start = onset as usize;
        for j in 0..(6.0 * decay) as usize {
            if start + j >= n {
                break;
            }
            let noise: f64 = StandardNormal.sample(&mut rng);
            x[start + j] += click_amp * (-(j as f64) / decay).exp() * noise;
        }
        onset += period * rng.random_range(0.8..1.2);
    }

    for v in &mut x {
        let floor: f64 = StandardNormal.sample(&mut rng);
        *v += 0.01 * floor;
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    AudioClip::mono(x.iter().map(|v| (0.9 * v / peak) as f32).collect(), SYNTH_RATE)
}

pub fn class_label(class: usize) -> String {
    format!("class{class:02}")
}

/// Everything written by [`gen_synth`].
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Manifest,
    pub test: Manifest,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Writes `audio/classKK/clipIII.wav` plus `train.csv` and `test.csv` under
/// `out_dir`. The first `round(0.7 n)` clips of every class go to training.
pub fn gen_synth(n_classes: usize, clips_per_class: usize, seed: u64, out_dir: &Path) -> Result<SynthCorpus> {
    if n_classes < 2 {
        return Err(ExperimentError::Invalid(format!("{n_classes} classes; need at least 2")));
    }
    if clips_per_class == 0 {
        return Err(ExperimentError::Invalid("clips_per_class must be positive".into()));
    }
    let n_train = (0.7 * clips_per_class as f64).round() as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut files = Vec::new();
    for class in 0..n_classes {
        for index in 0..clips_per_class {
            let rel = PathBuf::from(format!("audio/{}/clip{index:03}.wav", class_label(class)));
            let clip = synth_clip(n_classes, class, index, seed);
            let path = out_dir.join(&rel);
            super::write(&path, &encode_wav_pcm16(&clip))?;
            files.push(path);
            let row = ManifestRow {
                path: rel,
                label: class_label(class),
                device: None,
                city: None,
            };
            if index < n_train {
                train.push(row);
            } else {
                test.push(row);
            }
        }
    }
    let train = Manifest::new(train, out_dir)?;
    let test = Manifest::new(test, out_dir)?;
    let train_path = out_dir.join("train.csv");
    let test_path = out_dir.join("test.csv");
    train.save(&train_path)?;
    test.save(&test_path)?;
    Ok(SynthCorpus {
        train,
        test,
        train_path,
        test_path,
        files,
    })
}
