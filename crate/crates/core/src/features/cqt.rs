use std::f64::consts::PI;

use super::stft::frame_count;
use super::{check_clip, invalid, FeatureConfig, FeatureKind, FeatureMap, Result};
use crate::audio::AudioClip;

/// Quality factor for `bins_per_octave` geometric spacing.
pub fn cqt_q(bins_per_octave: usize) -> f64 {
    1.0 / (2f64.powf(1.0 / bins_per_octave as f64) - 1.0)
}

pub fn cqt_frequencies(fmin: f64, n_bins: usize, bins_per_octave: usize) -> Vec<f64> {
    (0..n_bins)
        .map(|k| fmin * 2f64.powf(k as f64 / bins_per_octave as f64))
        .collect()
}

/// Hann-windowed complex exponentials, one per bin, normalized by window sum.
#[derive(Debug, Clone)]
pub struct CqtKernels {
    pub frequencies: Vec<f64>,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl CqtKernels {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        let bpo = cfg.cqt_bins_per_octave;
        if bpo == 0 {
            return Err(invalid("cqt_bins_per_octave", "must be positive"));
        }
        let n_bins = cfg.n_bands.cqt;
        if n_bins == 0 {
            return Err(invalid("n_bands.cqt", "must be positive"));
        }
        if !(cfg.cqt_fmin > 0.0) {
            return Err(invalid("cqt_fmin", "must be positive"));
        }
        let frequencies = cqt_frequencies(cfg.cqt_fmin, n_bins, bpo);
        let top = frequencies[n_bins - 1];
        if top >= cfg.nyquist() {
            return Err(invalid(
                "cqt_fmin",
                format!("highest bin {top:.1} Hz reaches Nyquist {} Hz", cfg.nyquist()),
            ));
        }
        let q = cqt_q(bpo);
        let sr = f64::from(cfg.sample_rate);
        let mut re = Vec::with_capacity(n_bins);
        let mut im = Vec::with_capacity(n_bins);
        for &f in &frequencies {
            let len = (q * sr / f).ceil() as usize;
            let half = (len / 2) as f64;
            let window: Vec<f64> = (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * (n as f64 + 0.5) / len as f64).cos())
                .collect();
            let norm: f64 = window.iter().sum();
            let (mut kr, mut ki) = (Vec::with_capacity(len), Vec::with_capacity(len));
            for (n, w) in window.iter().enumerate() {
                let phase = -2.0 * PI * f * (n as f64 - half) / sr;
                kr.push(w * phase.cos() / norm);
                ki.push(w * phase.sin() / norm);
            }
            re.push(kr);
            im.push(ki);
        }
        Ok(CqtKernels { frequencies, re, im })
    }

    pub fn len(&self, bin: usize) -> usize {
        self.re[bin].len()
    }

    /// `|<x, kernel_bin>|^2` with the kernel centred on sample `centre`.
    pub fn power_at(&self, signal: &[f64], bin: usize, centre: usize) -> f64 {
        let (kr, ki) = (&self.re[bin], &self.im[bin]);
        let len = kr.len() as i64;
        let start = centre as i64 - len / 2;
        let lo = (-start).max(0) as usize;
        let hi = (signal.len() as i64 - start).clamp(0, len) as usize;
        if lo >= hi {
            return 0.0;
        }
        let seg = &signal[(start + lo as i64) as usize..(start + hi as i64) as usize];
        let (r, i) = dot2(seg, &kr[lo..hi], &ki[lo..hi]);
        r * r + i * i
    }
}

fn dot2(x: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut ra = [0.0f64; 4];
    let mut ia = [0.0f64; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        let o = c * 4;
        for l in 0..4 {
            ra[l] += x[o + l] * a[o + l];
            ia[l] += x[o + l] * b[o + l];
        }
    }
    let mut r = (ra[0] + ra[1]) + (ra[2] + ra[3]);
    let mut i = (ia[0] + ia[1]) + (ia[2] + ia[3]);
    for o in chunks * 4..x.len() {
        r += x[o] * a[o];
        i += x[o] * b[o];
    }
    (r, i)
}

/// Log power of direct kernel correlation at the shared frame centres.
pub fn cqt(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMap> {
    check_clip(clip, cfg)?;
    let kernels = CqtKernels::new(cfg)?;
    let n_bins = kernels.frequencies.len();
    let frames = frame_count(clip.samples.len(), cfg.window, cfg.hop);
    let signal: Vec<f64> = clip.samples.iter().map(|&s| f64::from(s)).collect();
    let mut values = Vec::with_capacity(frames * n_bins);
    for t in 0..frames {
        let centre = t * cfg.hop + cfg.window / 2;
        for bin in 0..n_bins {
            let p = kernels.power_at(&signal, bin, centre);
            values.push((p + cfg.log_offset).ln() as f32);
        }
    }
    Ok(FeatureMap {
        values,
        frames,
        bands: n_bins,
        kind: FeatureKind::Cqt,
        sample_rate: cfg.sample_rate,
        hop: cfg.hop,
        window: cfg.window,
    })
}
