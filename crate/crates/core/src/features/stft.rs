use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{invalid, Result};

/// Frames of `window` samples every `hop` samples, no padding.
pub fn frame_count(num_samples: usize, window: usize, hop: usize) -> usize {
    if num_samples < window || hop == 0 {
        0
    } else {
        1 + (num_samples - window) / hop
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// One-sided power spectrogram, `frames x bins` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

/// `|DFT_k|^2` of each Hann-windowed frame `[t*hop, t*hop + window)`.
pub fn stft_power(samples: &[f32], window: usize, hop: usize) -> Result<PowerSpectrogram> {
    if !window.is_power_of_two() {
        return Err(invalid("window", format!("{window} is not a power of two")));
    }
    if hop == 0 {
        return Err(invalid("hop", "must be positive"));
    }
    let frames = frame_count(samples.len(), window, hop);
    let bins = window / 2 + 1;
    let mut data = Vec::with_capacity(frames * bins);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window);
    let win = hann_window(window);
    let mut buf = vec![Complex64::new(0.0, 0.0); window];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..frames {
        let start = t * hop;
        for ((b, &s), &w) in buf.iter_mut().zip(&samples[start..start + window]).zip(&win) {
            *b = Complex64::new(f64::from(s) * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(PowerSpectrogram { frames, bins, data })
}
