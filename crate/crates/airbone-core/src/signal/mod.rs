//! Foundational DSP: waveforms, framing, filters, resampling, STFT/CQT,
//! Wiener denoising, and correlation statistics.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod accel;
pub mod cqt;
pub mod fft;
pub mod filter;
pub mod resample;
pub mod stats;
pub mod stft;
pub mod wav;
pub mod wiener;
pub mod window;

pub use cqt::cqt;
pub use filter::{apply_filter, FilterKind, FilterSpec};
pub use resample::resample;
pub use stats::pearson;
pub use stft::stft;
pub use wiener::{estimate_noise_profile, wiener_denoise};
pub use window::WindowFunction;

/// A sampled mono signal. Amplitudes are dimensionless; callers decide
/// their own reference level.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Validates rate and finiteness of every sample.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSampleRate(sample_rate));
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample(idx));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    /// Zero-filled waveform of `n` samples.
    pub fn zeros(n: usize, sample_rate: u32) -> Self {
        Waveform {
            samples: vec![0.0; n],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Peak-normalizes to max |amplitude| of 1. All-zero input is returned
    /// unchanged. Idempotent.
    pub fn normalize(&self) -> Waveform {
        let peak = self.peak();
        if peak == 0.0 {
            return self.clone();
        }
        let inv = 1.0 / peak;
        Waveform {
            samples: self.samples.iter().map(|s| s * inv).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Scales every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// First `n` samples (or everything if shorter).
    pub fn truncated(&self, n: usize) -> Waveform {
        Waveform {
            samples: self.samples[..n.min(self.samples.len())].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Contiguous segment `[start, start + n)`, clamped to the signal.
    pub fn segment(&self, start: usize, n: usize) -> Waveform {
        let start = start.min(self.samples.len());
        let end = (start + n).min(self.samples.len());
        Waveform {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Length-preserving shift: positive `k` advances the signal (content
    /// moves `k` samples earlier), negative `k` delays it. Vacated samples
    /// are zero-filled.
    pub fn shifted(&self, k: i64) -> Waveform {
        let n = self.samples.len() as i64;
        let samples = (0..n)
            .map(|i| {
                let j = i + k;
                if j >= 0 && j < n {
                    self.samples[j as usize]
                } else {
                    0.0
                }
            })
            .collect();
        Waveform {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Elementwise sum; lengths and rates must match.
    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch {
                left: self.sample_rate,
                right: other.sample_rate,
            });
        }
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(other.samples.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Waveform {
            samples,
            sample_rate: self.sample_rate,
        })
    }

    pub(crate) fn from_parts_unchecked(samples: Vec<f64>, sample_rate: u32) -> Waveform {
        Waveform {
            samples,
            sample_rate,
        }
    }
}

/// Analysis framing: window length and hop in milliseconds plus the taper.
/// The hop is the window length minus the overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub window_function: WindowFunction,
}

impl FrameSpec {
    pub fn new(window_ms: f64, hop_ms: f64, window_function: WindowFunction) -> Self {
        FrameSpec {
            window_ms,
            hop_ms,
            window_function,
        }
    }

    /// Frame spec from window length and overlap (window minus hop).
    pub fn with_overlap(window_ms: f64, overlap_ms: f64, window_function: WindowFunction) -> Self {
        FrameSpec {
            window_ms,
            hop_ms: window_ms - overlap_ms,
            window_function,
        }
    }

    pub fn window_samples(&self, sample_rate: u32) -> Result<usize> {
        let n = (self.window_ms * sample_rate as f64 / 1000.0).round() as usize;
        if n < 1 {
            return Err(Error::InvalidFrameSpec(format!(
                "window {} ms yields no samples at {} Hz",
                self.window_ms, sample_rate
            )));
        }
        Ok(n)
    }

    pub fn hop_samples(&self, sample_rate: u32) -> Result<usize> {
        let w = self.window_samples(sample_rate)?;
        let h = (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize;
        if h < 1 || h > w {
            return Err(Error::InvalidFrameSpec(format!(
                "hop {} ms invalid for window {} ms at {} Hz",
                self.hop_ms, self.window_ms, sample_rate
            )));
        }
        Ok(h)
    }
}

impl Default for FrameSpec {
    /// 5 ms window with 1 ms overlap (4 ms hop), Hann taper.
    fn default() -> Self {
        FrameSpec::with_overlap(5.0, 1.0, WindowFunction::Hann)
    }
}

/// Frequency axis kind of a time-frequency representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyScale {
    /// Uniform bin spacing (STFT).
    Linear,
    /// Geometric bin spacing (constant-Q).
    Log,
}

/// Time-frequency magnitude matrix with explicit axis bookkeeping.
/// `magnitudes` is indexed `[frequency_bin, time_frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Array2<f64>,
    pub bin_frequencies: Vec<f64>,
    pub frame_times: Vec<f64>,
    pub scale: FrequencyScale,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn frames(&self) -> usize {
        self.magnitudes.ncols()
    }

    /// Magnitude time series of one frequency bin.
    pub fn row(&self, bin: usize) -> Vec<f64> {
        self.magnitudes.row(bin).to_vec()
    }

    /// Index of the bin whose center frequency is closest to `hz`.
    pub fn nearest_bin(&self, hz: f64) -> usize {
        self.bin_frequencies
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - hz).abs().partial_cmp(&(*b - hz).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}
