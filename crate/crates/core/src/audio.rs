//! Audio decoding and the canonical waveform front-end.
//!
//! Every clip entering the feature extractors goes through the same chain:
//! [`decode_wav`] → [`downmix_mono`] → [`resample`] → [`fix_length`].

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AudioError {
    #[error("malformed WAV header: {field} ({detail})")]
    MalformedHeader { field: &'static str, detail: String },
    #[error("missing `{0}` chunk")]
    MissingChunk(&'static str),
    #[error("unsupported codec: format tag {format_tag:#06x}")]
    UnsupportedCodec { format_tag: u16 },
    #[error("unsupported bit depth {bits} for format tag {format_tag:#06x}")]
    UnsupportedBitDepth { format_tag: u16, bits: u16 },
    #[error("unsupported channel count {channels} in `{field}`")]
    UnsupportedChannels { field: &'static str, channels: u16 },
    #[error("truncated data chunk: header declares {declared} bytes, {available} available")]
    TruncatedData { declared: usize, available: usize },
    #[error("unsupported channel layout: {channels} channels (expected 1 or 2)")]
    UnsupportedLayout { channels: usize },
    #[error("invalid argument `{name}`: {detail}")]
    InvalidArgument { name: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// Decoded waveform. Samples are interleaved when `channels > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub channels: usize,
}

impl AudioClip {
    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioClip {
            samples,
            sample_rate,
            channels: 1,
        }
    }

    /// Number of frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels.max(1)
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / f64::from(self.sample_rate)
    }

    fn require_mono(&self, op: &'static str) -> Result<()> {
        if self.channels != 1 {
            return Err(AudioError::InvalidArgument {
                name: op,
                detail: format!("expected a mono clip, got {} channels", self.channels),
            });
        }
        Ok(())
    }
}

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(AudioError::MalformedHeader {
            field: "fmt_size",
            detail: format!("fmt chunk is {} bytes, need at least 16", body.len()),
        });
    }
    let mut format_tag = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let block_align = read_u16(body, 12);
    let bits = read_u16(body, 14);
    if format_tag == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(AudioError::MalformedHeader {
                field: "fmt_extension",
                detail: "WAVE_FORMAT_EXTENSIBLE without a sub-format GUID".into(),
            });
        }
        // First two bytes of the sub-format GUID carry the actual codec.
        format_tag = read_u16(body, 24);
    }
    Ok(FmtChunk {
        format_tag,
        channels,
        sample_rate,
        block_align,
        bits,
    })
}

/// Decode a RIFF/WAVE byte stream holding PCM16, PCM24 or float32 samples.
///
/// Integer samples are divided by `2^(bits-1)`; float samples are clipped to
/// `[-1, 1]` (NaN becomes 0). No resampling is performed.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 {
        return Err(AudioError::MalformedHeader {
            field: "riff_header",
            detail: format!("{} bytes is shorter than the 12-byte RIFF header", bytes.len()),
        });
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(AudioError::MalformedHeader {
            field: "riff_id",
            detail: format!("expected \"RIFF\", found {:?}", &bytes[0..4]),
        });
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedHeader {
            field: "wave_id",
            detail: format!("expected \"WAVE\", found {:?}", &bytes[8..12]),
        });
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        match id {
            b"fmt " => {
                if size > available {
                    return Err(AudioError::MalformedHeader {
                        field: "fmt_size",
                        detail: format!("declares {size} bytes, {available} available"),
                    });
                }
                fmt = Some(parse_fmt(&bytes[body_start..body_start + size])?);
            }
            b"data" => {
                if size > available {
                    return Err(AudioError::TruncatedData {
                        declared: size,
                        available,
                    });
                }
                data = Some(&bytes[body_start..body_start + size]);
                break;
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }

    let fmt = fmt.ok_or(AudioError::MissingChunk("fmt "))?;
    let data = data.ok_or(AudioError::MissingChunk("data"))?;

    if fmt.channels == 0 || fmt.channels > 2 {
        return Err(AudioError::UnsupportedChannels {
            field: "channels",
            channels: fmt.channels,
        });
    }
    if fmt.sample_rate == 0 {
        return Err(AudioError::MalformedHeader {
            field: "sample_rate",
            detail: "sample rate is zero".into(),
        });
    }
    let bytes_per_sample = match (fmt.format_tag, fmt.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_PCM, 24) => 3,
        (FORMAT_FLOAT, 32) => 4,
        (FORMAT_PCM, bits) | (FORMAT_FLOAT, bits) => {
            return Err(AudioError::UnsupportedBitDepth {
                format_tag: fmt.format_tag,
                bits,
            })
        }
        (format_tag, _) => return Err(AudioError::UnsupportedCodec { format_tag }),
    };
    let frame_bytes = bytes_per_sample * usize::from(fmt.channels);
    if usize::from(fmt.block_align) != frame_bytes {
        return Err(AudioError::MalformedHeader {
            field: "block_align",
            detail: format!("{} does not match {frame_bytes} bytes per frame", fmt.block_align),
        });
    }
    if data.len() % frame_bytes != 0 {
        return Err(AudioError::TruncatedData {
            declared: data.len(),
            available: data.len() - data.len() % frame_bytes,
        });
    }

    let samples: Vec<f32> = match bytes_per_sample {
        2 => data
            .chunks_exact(2)
            .map(|c| f32::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
            .collect(),
        3 => data
            .chunks_exact(3)
            .map(|c| {
                // Sign-extend through the top byte of an i32.
                let v = i32::from_le_bytes([0, c[0], c[1], c[2]]) >> 8;
                (f64::from(v) / 8_388_608.0) as f32
            })
            .collect(),
        _ => data
            .chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if v.is_nan() {
                    0.0
                } else {
                    v.clamp(-1.0, 1.0)
                }
            })
            .collect(),
    };

    Ok(AudioClip {
        samples,
        sample_rate: fmt.sample_rate,
        channels: usize::from(fmt.channels),
    })
}

/// Encode a clip as 16-bit PCM WAV. Amplitudes are clipped and rounded.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let channels = clip.channels.max(1) as u16;
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * u32::from(channels) * 2).to_le_bytes());
    out.extend_from_slice(&(channels * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let v = (f64::from(s.clamp(-1.0, 1.0)) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Average the channels of a stereo clip. Mono clips are returned unchanged.
pub fn downmix_mono(clip: &AudioClip) -> Result<AudioClip> {
    match clip.channels {
        1 => Ok(clip.clone()),
        2 => {
            let samples = clip
                .samples
                .chunks_exact(2)
                .map(|f| ((f64::from(f[0]) + f64::from(f[1])) * 0.5) as f32)
                .collect();
            Ok(AudioClip::mono(samples, clip.sample_rate))
        }
        channels => Err(AudioError::UnsupportedLayout { channels }),
    }
}

/// How stereo input is reduced to the mono pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    Average,
    Left,
    Right,
}

pub fn to_mono(clip: &AudioClip, mode: ChannelMode) -> Result<AudioClip> {
    if clip.channels == 1 || mode == ChannelMode::Average {
        return downmix_mono(clip);
    }
    if clip.channels != 2 {
        return Err(AudioError::UnsupportedLayout {
            channels: clip.channels,
        });
    }
    let pick = usize::from(mode == ChannelMode::Right);
    let samples = clip.samples.chunks_exact(2).map(|f| f[pick]).collect();
    Ok(AudioClip::mono(samples, clip.sample_rate))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc interpolation filter for a rational rate change.
///
/// Output sample `n` sits at input position `n * down / up`. The filter has
/// `up` polyphase branches, each normalized to unit DC gain.
#[derive(Debug, Clone)]
pub struct SincResampler {
    up: u64,
    down: u64,
    /// Taps reach `half` input samples to each side of the output position.
    half: i64,
    cutoff: f64,
    beta: f64,
    half_width: f64,
    table: Option<Vec<Vec<f64>>>,
}

impl SincResampler {
    /// Sinc zero crossings on each side of the kernel centre.
    pub const ZERO_CROSSINGS: f64 = 64.0;
    /// Passband edge relative to the lower Nyquist frequency.
    pub const ROLLOFF: f64 = 0.945;
    /// Kaiser β for roughly 80 dB of stopband attenuation.
    pub const KAISER_BETA: f64 = 7.857;
    const MAX_TABLE_PHASES: u64 = 8192;

    pub fn new(input_rate: u32, output_rate: u32) -> Self {
        let g = gcd(u64::from(input_rate), u64::from(output_rate));
        let up = u64::from(output_rate) / g;
        let down = u64::from(input_rate) / g;
        let cutoff = (up as f64 / down as f64).min(1.0) * Self::ROLLOFF;
        let half_width = Self::ZERO_CROSSINGS / cutoff;
        let half = half_width.ceil() as i64;
        let mut r = SincResampler {
            up,
            down,
            half,
            cutoff,
            beta: Self::KAISER_BETA,
            half_width,
            table: None,
        };
        if up <= Self::MAX_TABLE_PHASES {
            let table = (0..up).map(|p| r.phase_taps(p)).collect();
            r.table = Some(table);
        }
        r
    }

    fn kernel(&self, t: f64) -> f64 {
        let ratio = t / self.half_width;
        if ratio.abs() >= 1.0 {
            return 0.0;
        }
        let x = self.cutoff * t;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        };
        let window = bessel_i0(self.beta * (1.0 - ratio * ratio).sqrt()) / bessel_i0(self.beta);
        self.cutoff * sinc * window
    }

    /// Taps for input offsets `-half+1 ..= half` relative to the floor position.
    fn phase_taps(&self, phase: u64) -> Vec<f64> {
        let frac = phase as f64 / self.up as f64;
        let mut taps: Vec<f64> = (-self.half + 1..=self.half)
            .map(|j| self.kernel(j as f64 - frac))
            .collect();
        let sum: f64 = taps.iter().sum();
        for t in &mut taps {
            *t /= sum;
        }
        taps
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        let num = input_len as u128 * u128::from(self.up);
        let den = u128::from(self.down);
        ((num + den / 2) / den) as usize
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        let n_out = self.output_len(input.len());
        let n_in = input.len() as i64;
        let mut out = Vec::with_capacity(n_out);
        let mut scratch;
        for n in 0..n_out as u64 {
            let pos = n * self.down;
            let base = (pos / self.up) as i64;
            let phase = pos % self.up;
            let taps: &[f64] = match &self.table {
                Some(t) => &t[phase as usize],
                None => {
                    scratch = self.phase_taps(phase);
                    &scratch
                }
            };
            let first = base - self.half + 1;
            let mut acc = 0.0f64;
            for (k, &w) in taps.iter().enumerate() {
                let idx = first + k as i64;
                if idx >= 0 && idx < n_in {
                    acc += w * f64::from(input[idx as usize]);
                }
            }
            out.push(acc as f32);
        }
        out
    }
}

/// Band-limited resampling of a mono clip to `target_rate`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    clip.require_mono("clip")?;
    if target_rate == 0 {
        return Err(AudioError::InvalidArgument {
            name: "target_rate",
            detail: "must be positive".into(),
        });
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let resampler = SincResampler::new(clip.sample_rate, target_rate);
    Ok(AudioClip::mono(resampler.process(&clip.samples), target_rate))
}

/// Zero-pad or truncate at the end to exactly `round(duration_s * sample_rate)` samples.
pub fn fix_length(clip: &AudioClip, duration_s: f64) -> Result<AudioClip> {
    clip.require_mono("clip")?;
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(AudioError::InvalidArgument {
            name: "duration_s",
            detail: format!("{duration_s} is not a positive duration"),
        });
    }
    let target = (duration_s * f64::from(clip.sample_rate)).round() as usize;
    let mut samples = clip.samples.clone();
    samples.resize(target, 0.0);
    Ok(AudioClip::mono(samples, clip.sample_rate))
}

/// Full front-end: downmix, resample and length-normalize.
pub fn canonicalize(
    clip: &AudioClip,
    mode: ChannelMode,
    target_rate: u32,
    duration_s: f64,
) -> Result<AudioClip> {
    let mono = to_mono(clip, mode)?;
    let resampled = resample(&mono, target_rate)?;
    fix_length(&resampled, duration_s)
}
