//! Linear-phase FIR filters (windowed sinc) with group-delay compensation,
//! plus a zero-phase spectral gain for smooth frequency shaping.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::fft::{convolve_same_replicate, fft_forward, fft_inverse, next_pow2};
use crate::signal::{wiener, Waveform, WindowFunction};

/// Filter families understood by [`apply_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Highpass,
    Bandpass,
    /// Adaptive Wiener denoiser; the noise statistics are estimated from
    /// the lowest-energy (unvoiced) frames of the input itself.
    Wiener,
}

/// Filter description. `order` is the FIR tap count; `None` picks one
/// that holds the passband edge within 3 dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub low_hz: f64,
    pub high_hz: Option<f64>,
    pub order: Option<usize>,
}

impl FilterSpec {
    pub fn highpass(cutoff_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Highpass,
            low_hz: cutoff_hz,
            high_hz: None,
            order: None,
        }
    }

    pub fn bandpass(low_hz: f64, high_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass,
            low_hz,
            high_hz: Some(high_hz),
            order: None,
        }
    }

    pub fn wiener() -> Self {
        FilterSpec {
            kind: FilterKind::Wiener,
            low_hz: 0.0,
            high_hz: None,
            order: None,
        }
    }

    fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        match self.kind {
            FilterKind::Highpass => {
                if self.low_hz <= 0.0 {
                    return Err(Error::InvalidFilterSpec(format!(
                        "highpass cutoff must be positive, got {}",
                        self.low_hz
                    )));
                }
                if self.low_hz >= nyquist {
                    return Err(Error::CutoffAboveNyquist {
                        cutoff_hz: self.low_hz,
                        nyquist_hz: nyquist,
                    });
                }
            }
            FilterKind::Bandpass => {
                let high = self.high_hz.ok_or_else(|| {
                    Error::InvalidFilterSpec("bandpass needs two cutoffs".into())
                })?;
                if self.low_hz <= 0.0 || high <= self.low_hz {
                    return Err(Error::InvalidFilterSpec(format!(
                        "bandpass cutoffs must satisfy 0 < low < high, got {} and {}",
                        self.low_hz, high
                    )));
                }
                if high >= nyquist {
                    return Err(Error::CutoffAboveNyquist {
                        cutoff_hz: high,
                        nyquist_hz: nyquist,
                    });
                }
            }
            FilterKind::Wiener => {}
        }
        Ok(())
    }
}

/// Windowed-sinc lowpass prototype with unity DC gain.
/// `cutoff_norm` is cutoff / sample_rate in (0, 0.5).
pub fn lowpass_taps(cutoff_norm: f64, taps: usize, window: WindowFunction) -> Vec<f64> {
    let taps = if taps % 2 == 0 { taps + 1 } else { taps };
    let mid = (taps / 2) as isize;
    let w = window.samples(taps);
    let mut h: Vec<f64> = (0..taps as isize)
        .map(|i| {
            let n = (i - mid) as f64;
            let x = 2.0 * cutoff_norm * n;
            let sinc = if n == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
            };
            2.0 * cutoff_norm * sinc * w[i as usize]
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in h.iter_mut() {
        *v /= sum;
    }
    h
}

/// Tap count achieving transition width `delta_hz` with a Hamming window.
fn taps_for_transition(delta_hz: f64, sample_rate: u32) -> usize {
    let n = (3.3 * sample_rate as f64 / delta_hz).ceil() as usize;
    let n = n.clamp(31, 8191);
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

fn auto_taps(spec: &FilterSpec, sample_rate: u32) -> usize {
    let edge_delta = |edge: f64| -> f64 {
        (0.8 * edge).min(0.05 * sample_rate as f64).max(0.002 * sample_rate as f64)
    };
    match spec.kind {
        FilterKind::Highpass => taps_for_transition(edge_delta(spec.low_hz), sample_rate),
        FilterKind::Bandpass => {
            let d = edge_delta(spec.low_hz).min(edge_delta(spec.high_hz.unwrap_or(spec.low_hz)));
            taps_for_transition(d, sample_rate)
        }
        FilterKind::Wiener => 0,
    }
}

/// FIR taps realizing `spec` at `sample_rate`. The passband edges are
/// pulled slightly into the transition so the response at the nominal
/// edge stays within 3 dB.
pub fn design_fir(spec: &FilterSpec, sample_rate: u32) -> Result<Vec<f64>> {
    spec.validate(sample_rate)?;
    let fs = sample_rate as f64;
    let taps = spec.order.unwrap_or_else(|| auto_taps(spec, sample_rate));
    let taps = if taps % 2 == 0 { taps + 1 } else { taps };
    let actual_delta = 3.3 * fs / taps as f64;
    match spec.kind {
        FilterKind::Highpass => {
            let fc = (spec.low_hz - 0.35 * actual_delta).max(spec.low_hz * 0.25);
            let lp = lowpass_taps(fc / fs, taps, WindowFunction::Hamming);
            // Spectral inversion: exact null at DC.
            let mid = taps / 2;
            let mut h: Vec<f64> = lp.iter().map(|v| -v).collect();
            h[mid] += 1.0;
            Ok(h)
        }
        FilterKind::Bandpass => {
            let high = spec.high_hz.unwrap();
            let fc1 = (spec.low_hz - 0.35 * actual_delta).max(spec.low_hz * 0.25);
            let fc2 = (high + 0.35 * actual_delta).min(0.499 * fs);
            let lp_high = lowpass_taps(fc2 / fs, taps, WindowFunction::Hamming);
            let lp_low = lowpass_taps(fc1 / fs, taps, WindowFunction::Hamming);
            Ok(lp_high
                .iter()
                .zip(lp_low.iter())
                .map(|(a, b)| a - b)
                .collect())
        }
        FilterKind::Wiener => Err(Error::InvalidFilterSpec(
            "wiener has no FIR realization; apply_filter handles it directly".into(),
        )),
    }
}

/// Filters `w` with zero net group delay; output has the same length and
/// sample rate as the input.
pub fn apply_filter(w: &Waveform, spec: &FilterSpec) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::EmptySignal("apply_filter input"));
    }
    if spec.kind == FilterKind::Wiener {
        let profile = wiener::estimate_noise_profile(w)?;
        return wiener::wiener_denoise(w, &profile);
    }
    let taps = design_fir(spec, w.sample_rate())?;
    let filtered = convolve_same_replicate(w.samples(), &taps);
    Waveform::new(filtered, w.sample_rate())
}

/// Zero-phase spectral shaping: multiplies the magnitude spectrum by
/// `gain(f_hz)` (applied symmetrically), leaving phase untouched.
pub fn apply_spectral_gain(w: &Waveform, gain: impl Fn(f64) -> f64) -> Waveform {
    if w.is_empty() {
        return w.clone();
    }
    let n = w.len();
    let size = next_pow2(2 * n);
    let mut buf: Vec<Complex64> = w
        .samples()
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(size)
        .collect();
    fft_forward(&mut buf);
    let fs = w.sample_rate() as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        let f = if k <= size / 2 {
            k as f64 * fs / size as f64
        } else {
            (size - k) as f64 * fs / size as f64
        };
        *v *= gain(f);
    }
    fft_inverse(&mut buf);
    Waveform::from_parts_unchecked(buf[..n].iter().map(|c| c.re).collect(), w.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, seconds: f64) -> Waveform {
        let n = (seconds * rate as f64) as usize;
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    /// Steady-state amplitude over the central half of the signal.
    fn central_amplitude(w: &Waveform) -> f64 {
        let n = w.len();
        let mid = &w.samples()[n / 4..3 * n / 4];
        (2.0 * mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt()
    }

    #[test]
    fn dc_through_highpass_vanishes() {
        let w = Waveform::new(vec![1.0; 16000], 8000).unwrap();
        let out = apply_filter(&w, &FilterSpec::highpass(20.0)).unwrap();
        // Skip the edge transients on both sides.
        let interior = &out.samples()[4000..12000];
        let rms = (interior.iter().map(|v| v * v).sum::<f64>() / interior.len() as f64).sqrt();
        assert!(rms < 1e-3, "dc leak rms {rms}");
    }

    #[test]
    fn tone_passes_highpass_within_5_percent() {
        let w = sine(1000.0, 8000, 2.0);
        let out = apply_filter(&w, &FilterSpec::highpass(20.0)).unwrap();
        assert_eq!(out.len(), w.len());
        let amp = central_amplitude(&out);
        assert!((amp - 1.0).abs() < 0.05, "amplitude {amp}");
    }

    #[test]
    fn bandpass_passes_in_band_and_rejects_out_of_band() {
        let spec = FilterSpec::bandpass(20.0, 2000.0);
        let pass = apply_filter(&sine(1000.0, 8000, 2.0), &spec).unwrap();
        assert!((central_amplitude(&pass) - 1.0).abs() < 0.05);

        let stop = apply_filter(&sine(3000.0, 8000, 2.0), &spec).unwrap();
        let atten_db = -20.0 * central_amplitude(&stop).log10();
        assert!(atten_db >= 20.0, "attenuation {atten_db} dB");
    }

    #[test]
    fn rejects_cutoff_at_or_above_nyquist() {
        let w = sine(100.0, 8000, 0.5);
        assert!(apply_filter(&w, &FilterSpec::highpass(4000.0)).is_err());
        assert!(apply_filter(&w, &FilterSpec::bandpass(20.0, 4000.0)).is_err());
    }

    #[test]
    fn filtering_is_linear() {
        let x = sine(300.0, 8000, 1.0);
        let y = sine(700.0, 8000, 1.0);
        let (alpha, beta) = (1.7, -0.4);
        let spec = FilterSpec::bandpass(20.0, 2000.0);
        let mix = x.scaled(alpha).add(&y.scaled(beta)).unwrap();
        let lhs = apply_filter(&mix, &spec).unwrap();
        let fx = apply_filter(&x, &spec).unwrap();
        let fy = apply_filter(&y, &spec).unwrap();
        let rhs = fx.scaled(alpha).add(&fy.scaled(beta)).unwrap();
        let scale = lhs.rms().max(1e-12);
        for (a, b) in lhs.samples().iter().zip(rhs.samples()) {
            assert!((a - b).abs() / scale < 1e-9);
        }
    }

    #[test]
    fn spectral_gain_halves_a_band() {
        let w = sine(1000.0, 8000, 2.0);
        let out = apply_spectral_gain(&w, |f| if f > 500.0 { 0.5 } else { 1.0 });
        assert!((central_amplitude(&out) - 0.5).abs() < 0.02);
    }
}
