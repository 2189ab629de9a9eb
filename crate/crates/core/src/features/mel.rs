use std::f64::consts::PI;

use super::stft::{stft_power, PowerSpectrogram};
use super::{check_clip, invalid, FeatureConfig, FeatureKind, FeatureMap, Result};
use crate::audio::AudioClip;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Dense `rows x cols` nonnegative weighting matrix over FFT bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    /// Nonzero column span `[lo, hi)` of each row.
    spans: Vec<(usize, usize)>,
}

impl FilterBank {
    pub(crate) fn from_dense(rows: usize, cols: usize, weights: Vec<f64>) -> Self {
        let spans = (0..rows)
            .map(|r| {
                let row = &weights[r * cols..(r + 1) * cols];
                let lo = row.iter().position(|&w| w != 0.0).unwrap_or(0);
                let hi = row.iter().rposition(|&w| w != 0.0).map_or(0, |i| i + 1);
                (lo, hi.max(lo))
            })
            .collect();
        FilterBank { rows, cols, weights, spans }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    /// `log(W . P_t + offset)` for every frame, as `frames x rows`.
    pub fn apply_log(&self, spec: &PowerSpectrogram, log_offset: f64) -> Vec<f64> {
        assert_eq!(spec.bins, self.cols, "filterbank expects {} bins", self.cols);
        let mut out = Vec::with_capacity(spec.frames * self.rows);
        for t in 0..spec.frames {
            let frame = spec.frame(t);
            for (r, &(lo, hi)) in self.spans.iter().enumerate() {
                let row = &self.row(r)[lo..hi];
                let energy: f64 = row.iter().zip(&frame[lo..hi]).map(|(w, p)| w * p).sum();
                out.push((energy + log_offset).ln());
            }
        }
        out
    }
}

/// Triangular filters with peaks equally spaced on the HTK mel scale.
///
/// A filter too narrow to straddle any FFT bin gets unit weight on the bin
/// nearest its centre, so no row is ever all zero.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sr: u32, fmin: f64, fmax: f64) -> Result<FilterBank> {
    if n_mels == 0 {
        return Err(invalid("n_mels", "must be at least 1"));
    }
    let nyquist = f64::from(sr) / 2.0;
    if fmax > nyquist {
        return Err(invalid("fmax", format!("{fmax} Hz exceeds Nyquist {nyquist} Hz")));
    }
    if !(fmin >= 0.0 && fmin < fmax) {
        return Err(invalid("fmin", format!("need 0 <= fmin < fmax, got {fmin}..{fmax}")));
    }
    let cols = n_fft / 2 + 1;
    let bin_hz = f64::from(sr) / n_fft as f64;
    let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut weights = vec![0.0; n_mels * cols];
    for m in 0..n_mels {
        let (left, centre, right) = (points[m], points[m + 1], points[m + 2]);
        let row = &mut weights[m * cols..(m + 1) * cols];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let up = (f - left) / (centre - left);
            let down = (right - f) / (right - centre);
            *w = up.min(down).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            let nearest = ((centre / bin_hz).round() as usize).min(cols - 1);
            row[nearest] = 1.0;
        }
    }
    Ok(FilterBank::from_dense(n_mels, cols, weights))
}

fn log_mel_grid(clip: &AudioClip, cfg: &FeatureConfig, n_mels: usize) -> Result<(usize, Vec<f64>)> {
    check_clip(clip, cfg)?;
    let spec = stft_power(&clip.samples, cfg.window, cfg.hop)?;
    let fb = mel_filterbank(n_mels, cfg.window, cfg.sample_rate, cfg.mel_fmin, cfg.mel_fmax())?;
    Ok((spec.frames, fb.apply_log(&spec, cfg.log_offset)))
}

fn feature_map(kind: FeatureKind, cfg: &FeatureConfig, frames: usize, bands: usize, values: Vec<f32>) -> FeatureMap {
    FeatureMap {
        values,
        frames,
        bands,
        kind,
        sample_rate: cfg.sample_rate,
        hop: cfg.hop,
        window: cfg.window,
    }
}

pub fn log_mel(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMap> {
    let n_mels = cfg.n_bands.log_mel;
    let (frames, grid) = log_mel_grid(clip, cfg, n_mels)?;
    let values = grid.into_iter().map(|v| v as f32).collect();
    Ok(feature_map(FeatureKind::LogMel, cfg, frames, n_mels, values))
}

/// Orthonormal DCT-II matrix, `n_out x n_in`, truncated to the first `n_out` rows.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Vec<f64> {
    let n = n_in as f64;
    let mut d = Vec::with_capacity(n_out * n_in);
    for k in 0..n_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..n_in {
            d.push(scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos());
        }
    }
    d
}

/// DCT-II of the log-mel frame, keeping `n_bands.mfcc` coefficients.
pub fn mfcc(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMap> {
    let n_mels = cfg.mfcc_mels;
    let n_coeffs = cfg.n_bands.mfcc;
    if n_coeffs > n_mels {
        return Err(invalid(
            "n_coeffs",
            format!("{n_coeffs} coefficients requested from {n_mels} mel bands"),
        ));
    }
    let (frames, grid) = log_mel_grid(clip, cfg, n_mels)?;
    let dct = dct_matrix(n_coeffs, n_mels);
    let mut values = Vec::with_capacity(frames * n_coeffs);
    for frame in grid.chunks_exact(n_mels) {
        for k in 0..n_coeffs {
            let row = &dct[k * n_mels..(k + 1) * n_mels];
            values.push(row.iter().zip(frame).map(|(a, b)| a * b).sum::<f64>() as f32);
        }
    }
    Ok(feature_map(FeatureKind::Mfcc, cfg, frames, n_coeffs, values))
}
