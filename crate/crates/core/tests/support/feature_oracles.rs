#![allow(dead_code)]

use std::f64::consts::PI;

use ascnet::audio::AudioClip;
use ascnet::features::{
    cqt, cqt_frequencies, extract, frame_count, gammatone_weights, hann_window, stft_power, FeatureConfig, FeatureKind,
    FeatureMap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

fn sine(freq: f64, rate: u32, n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| (2.0 * PI * freq * i as f64 / f64::from(rate)).sin() as f32)
        .collect()
}

/// O(n^2) one-sided power spectrum of a Hann-windowed frame.
fn brute_force_power(frame: &[f32]) -> Vec<f64> {
    let n = frame.len();
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, (&x, &wi)) in frame.iter().zip(&w).enumerate() {
                let angle = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                re += f64::from(x) * wi * angle.cos();
                im += f64::from(x) * wi * angle.sin();
            }
            re * re + im * im
        })
        .collect()
}

fn argmax(xs: impl IntoIterator<Item = f64>) -> usize {
    xs.into_iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
        .0
}

pub fn stft_matches_brute_force_dft_on_random_frames() {
    let (window, hop) = (2048, 512);
    let x = noise(44100, 11);
    let spec = stft_power(&x, window, hop).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let t = rng.random_range(0..spec.frames);
        let oracle = brute_force_power(&x[t * hop..t * hop + window]);
        let got = spec.frame(t);
        let scale = oracle.iter().cloned().fold(0.0, f64::max);
        for (k, (&g, &o)) in got.iter().zip(&oracle).enumerate() {
            let rel = (g - o).abs() / o.abs().max(1e-3 * scale);
            assert!(rel < 1e-5, "frame {t} bin {k}: {g} vs {o}");
        }
    }
}

pub fn stft_localizes_bin_centre_sines() {
    let (window, hop, rate) = (2048, 512, 44100);
    for k in [5usize, 93, 400, 1000] {
        let freq = k as f64 * f64::from(rate) / window as f64;
        let spec = stft_power(&sine(freq, rate, 20000), window, hop).unwrap();
        for t in 0..spec.frames {
            assert_eq!(argmax(spec.frame(t).iter().copied()), k, "frame {t}");
        }
    }
}

pub fn parseval_holds_per_frame() {
    let (window, hop) = (1024, 256);
    let x = noise(8192, 3);
    let spec = stft_power(&x, window, hop).unwrap();
    let w = hann_window(window);
    for t in 0..spec.frames {
        let p = spec.frame(t);
        let two_sided = p[0] + p[window / 2] + 2.0 * p[1..window / 2].iter().sum::<f64>();
        let energy: f64 = x[t * hop..t * hop + window]
            .iter()
            .zip(&w)
            .map(|(&s, &wi)| (f64::from(s) * wi).powi(2))
            .sum();
        let rel = (two_sided / window as f64 - energy).abs() / energy;
        assert!(rel < 1e-6, "frame {t}: relative error {rel}");
    }
}

pub fn cqt_localizes_bin_centre_sines() {
    let cfg = FeatureConfig::task1a();
    let freqs = cqt_frequencies(cfg.cqt_fmin, cfg.n_bands.cqt, cfg.cqt_bins_per_octave);
    let n = 2 * 44100;
    for j in [16usize, 32, 48, 63] {
        let clip = AudioClip::mono(sine(freqs[j], 44100, n), 44100);
        let m = cqt(&clip, &cfg).unwrap();
        let edge = 20000 / cfg.hop;
        for t in edge..m.frames - edge {
            assert_eq!(argmax(m.frame(t).iter().map(|&v| f64::from(v))), j, "bin {j} frame {t}");
        }
    }
}

pub fn gammatone_rows_peak_at_the_nearest_fft_bin() {
    let (n_fft, sr) = (2048usize, 44100u32);
    let bank = gammatone_weights(64, n_fft, sr, 50.0, 22050.0).unwrap();
    let bin_hz = f64::from(sr) / n_fft as f64;
    // Centres re-derived from the ERB-rate scale, peaks located on a 0.05 Hz grid.
    let erb_rate = |f: f64| 21.4 * (1.0 + 0.00437 * f).log10();
    let inv = |e: f64| (10f64.powf(e / 21.4) - 1.0) / 0.00437;
    let (lo, hi) = (erb_rate(50.0), erb_rate(22050.0));
    for j in 0..64 {
        let fc = inv(lo + (hi - lo) * j as f64 / 63.0);
        let b = 1.019 * 24.7 * (4.37 * fc / 1000.0 + 1.0);
        let response = |f: f64| {
            let x = (f - fc) / b;
            1.0 / (1.0 + x * x).powi(4)
        };
        let grid_peak = (0..=(22050.0 / 0.05) as usize)
            .map(|i| i as f64 * 0.05)
            .fold((0.0, f64::NEG_INFINITY), |best, f| {
                let r = response(f);
                if r > best.1 {
                    (f, r)
                } else {
                    best
                }
            })
            .0;
        let nearest = ((grid_peak / bin_hz).round() as usize).min(n_fft / 2);
        assert_eq!(argmax(bank.row(j).iter().copied()), nearest, "row {j}, centre {fc:.1} Hz");
    }
}

fn ten_second_clip() -> AudioClip {
    AudioClip::mono(noise(441_000, 5).iter().map(|v| v * 0.3).collect(), 44100)
}

pub fn task1a_shapes_and_shared_frame_count() {
    let cfg = FeatureConfig::task1a();
    let clip = ten_second_clip();
    let expected_t = 1 + (441_000 - 2048) / 512;
    assert_eq!(expected_t, 858);
    assert_eq!(frame_count(441_000, 2048, 512), expected_t);
    let shapes: Vec<(usize, usize)> = FeatureKind::ALL
        .iter()
        .map(|&k| {
            let m = extract(&clip, k, &cfg).unwrap();
            assert_eq!(m.values.len(), m.frames * m.bands);
            (m.frames, m.bands)
        })
        .collect();
    assert_eq!(shapes, vec![(858, 40), (858, 64), (858, 64), (858, 40)]);
}

pub fn frame_counts_agree_for_odd_lengths() {
    let cfg = FeatureConfig::common_64();
    for n in [2048usize, 2049, 2559, 2560, 30001] {
        let clip = AudioClip::mono(noise(n, n as u64), 44100);
        let ts: Vec<usize> = FeatureKind::ALL.iter().map(|&k| extract(&clip, k, &cfg).unwrap().frames).collect();
        assert!(ts.iter().all(|&t| t == frame_count(n, 2048, 512)), "n = {n}: {ts:?}");
    }
}

pub fn extraction_is_deterministic_and_files_round_trip() {
    let cfg = FeatureConfig::task1a();
    let clip = AudioClip::mono(noise(44100, 8), 44100);
    for kind in FeatureKind::ALL {
        let a = extract(&clip, kind, &cfg).unwrap();
        assert_eq!(a, extract(&clip, kind, &cfg).unwrap());
        let mut meta = a.metadata();
        meta.config = Some(cfg.clone());
        meta.source_hash = Some("abc".into());
        let bytes = a.to_bytes(&meta).unwrap();
        let (b, meta2) = FeatureMap::from_bytes(&bytes).unwrap();
        assert_eq!(b, a);
        assert_eq!(meta2, meta);
        assert_eq!(b.to_bytes(&meta2).unwrap(), bytes);
    }
}

pub fn silence_maps_to_the_log_floor() {
    let cfg = FeatureConfig::task1a();
    let clip = AudioClip::mono(vec![0.0; 8192], 44100);
    let floor = cfg.log_offset.ln() as f32;
    for kind in [FeatureKind::LogMel, FeatureKind::Cqt, FeatureKind::Gamma] {
        let m = extract(&clip, kind, &cfg).unwrap();
        assert!(m.values.iter().all(|&v| v == floor), "{kind}");
    }
}
