//! Speech frontend: framing, Hamming-windowed log-magnitude spectra and
//! per-utterance normalization.

use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::tensor::Tensor;

pub const SAMPLE_RATE_HZ: u32 = 16_000;
pub const DEFAULT_FRAME_LEN: usize = 320;
pub const DEFAULT_HOP: usize = 160;
/// Floor inside the logarithm so silent frames stay finite.
pub const LOG_EPSILON: f64 = 1e-10;
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("signal of {len} samples is shorter than one {frame_len}-sample frame")]
    TooShort { len: usize, frame_len: usize },
    #[error("invalid framing: frame_len {frame_len}, hop {hop}")]
    BadFraming { frame_len: usize, hop: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("frame {index} has {got} samples, expected {expected}")]
    RaggedFrame {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("no frames")]
    Empty,
    #[error("{path}: {detail}")]
    Wav { path: String, detail: String },
}

/// A mono sample sequence in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSequence {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

/// `N × F` log-magnitude features.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub frames: Tensor,
    pub frame_len_samples: usize,
    pub hop_samples: usize,
}

impl Spectrum {
    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn n_bins(&self) -> usize {
        self.frames.shape()[1]
    }
}

/// Number of whole frames; trailing samples that do not fill a frame are dropped.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> Result<usize, DspError> {
    if frame_len == 0 || hop == 0 || hop > frame_len {
        return Err(DspError::BadFraming { frame_len, hop });
    }
    if len < frame_len {
        return Err(DspError::TooShort { len, frame_len });
    }
    Ok(1 + (len - frame_len) / hop)
}

pub fn frame_signal(samples: &[f64], frame_len: usize, hop: usize) -> Result<Vec<Vec<f64>>, DspError> {
    let n = frame_count(samples.len(), frame_len, hop)?;
    Ok((0..n)
        .map(|i| samples[i * hop..i * hop + frame_len].to_vec())
        .collect())
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / denom).cos())
        .collect()
}

/// Raw (unnormalized) spectrum with `frame_len/2 + 1` bins per frame.
pub fn spectrogram(frames: &[Vec<f64>], hop: usize) -> Result<Spectrum, DspError> {
    let frame_len = frames.first().ok_or(DspError::Empty)?.len();
    let bins = frame_len / 2 + 1;
    let window = hamming(frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_len];
    let mut data = Vec::with_capacity(frames.len() * bins);
    for (index, frame) in frames.iter().enumerate() {
        if frame.len() != frame_len {
            return Err(DspError::RaggedFrame {
                index,
                got: frame.len(),
                expected: frame_len,
            });
        }
        for (k, ((slot, &x), w)) in buf.iter_mut().zip(frame).zip(&window).enumerate() {
            if !x.is_finite() {
                return Err(DspError::NonFinite(index * hop + k));
            }
            *slot = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        data.extend(buf[..bins].iter().map(|c| (c.norm() + LOG_EPSILON).ln()));
    }
    Ok(Spectrum {
        frames: Tensor::new(vec![frames.len(), bins], data).expect("shape matches data"),
        frame_len_samples: frame_len,
        hop_samples: hop,
    })
}

/// Subtracts the utterance mean and divides by its standard deviation.
pub fn normalize_spectrum(raw: &Spectrum) -> Spectrum {
    let data = raw.frames.data();
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(STD_FLOOR);
    let mut frames = raw.frames.clone();
    for v in frames.data_mut() {
        *v = (*v - mean) / std;
    }
    Spectrum { frames, ..*raw }
}

/// Frames, transforms and normalizes in one go.
pub fn features(samples: &[f64], frame_len: usize, hop: usize) -> Result<Spectrum, DspError> {
    let frames = frame_signal(samples, frame_len, hop)?;
    Ok(normalize_spectrum(&spectrogram(&frames, hop)?))
}

/// Reads 16 kHz mono 16-bit PCM and scales to [-1, 1).
pub fn read_wav(path: &Path) -> Result<SampleSequence, DspError> {
    let err = |detail: String| DspError::Wav {
        path: path.display().to_string(),
        detail,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| err(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(err(format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(err(format!(
            "expected {SAMPLE_RATE_HZ} Hz, found {} Hz",
            spec.sample_rate
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(err("expected 16-bit integer PCM".into()));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| err(e.to_string()))?;
    if samples.is_empty() {
        return Err(err("no samples".into()));
    }
    Ok(SampleSequence {
        samples,
        sample_rate_hz: spec.sample_rate,
    })
}

/// Writes 16 kHz mono 16-bit PCM, clamping to the representable range.
pub fn write_wav(path: &Path, samples: &[f64]) -> Result<(), DspError> {
    let err = |e: hound::Error| DspError::Wav {
        path: path.display().to_string(),
        detail: e.to_string(),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(err)?;
    }
    writer.finalize().map_err(err)
}
