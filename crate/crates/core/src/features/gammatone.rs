use super::mel::FilterBank;
use super::stft::stft_power;
use super::{check_clip, invalid, FeatureConfig, FeatureKind, FeatureMap, Result};
use crate::audio::AudioClip;

const GAMMATONE_ORDER: i32 = 4;
/// Bandwidth scale for a 4th-order filter to match the ERB.
const ERB_BANDWIDTH_SCALE: f64 = 1.019;

/// Glasberg & Moore equivalent rectangular bandwidth in Hz.
pub fn erb(hz: f64) -> f64 {
    24.7 * (4.37 * hz / 1000.0 + 1.0)
}

fn erb_rate(hz: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * hz).log10()
}

fn erb_rate_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 0.00437
}

/// `n` centre frequencies equally spaced on the ERB-rate scale, `fmin..=fmax`.
pub fn erb_space(fmin: f64, fmax: f64, n: usize) -> Vec<f64> {
    let (lo, hi) = (erb_rate(fmin), erb_rate(fmax));
    match n {
        0 => Vec::new(),
        1 => vec![erb_rate_to_hz((lo + hi) / 2.0)],
        _ => (0..n)
            .map(|i| erb_rate_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Rows are squared magnitude responses `(1 + ((f - fc)/b)^2)^-4` of
/// 4th-order gammatone filters, sampled at the FFT bin frequencies.
pub fn gammatone_weights(n_bands: usize, n_fft: usize, sr: u32, fmin: f64, fmax: f64) -> Result<FilterBank> {
    if n_bands == 0 {
        return Err(invalid("n_bands", "must be at least 1"));
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
    let centres = erb_space(fmin, fmax, n_bands);
    let mut weights = Vec::with_capacity(n_bands * cols);
    for &fc in &centres {
        let b = ERB_BANDWIDTH_SCALE * erb(fc);
        for k in 0..cols {
            let x = (k as f64 * bin_hz - fc) / b;
            weights.push((1.0 + x * x).powi(-GAMMATONE_ORDER));
        }
    }
    Ok(FilterBank::from_dense(n_bands, cols, weights))
}

/// Gammatone-weighted power spectrogram, log compressed.
pub fn gammatone(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMap> {
    check_clip(clip, cfg)?;
    let spec = stft_power(&clip.samples, cfg.window, cfg.hop)?;
    let n_bands = cfg.n_bands.gamma;
    let weights = gammatone_weights(n_bands, cfg.window, cfg.sample_rate, cfg.gamma_fmin, cfg.gamma_fmax())?;
    let values = weights
        .apply_log(&spec, cfg.log_offset)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    Ok(FeatureMap {
        values,
        frames: spec.frames,
        bands: n_bands,
        kind: FeatureKind::Gamma,
        sample_rate: cfg.sample_rate,
        hop: cfg.hop,
        window: cfg.window,
    })
}
