//! Constant-Q transform with geometrically spaced bins.
//!
//! Bins sit at `f_min * 2^(k / bins_per_octave)` for
//! `k = 0 .. floor(bins_per_octave * log2(f_max / f_min))` inclusive, so the
//! bin count is `floor(bins_per_octave * log2(f_max / f_min)) + 1`.
//!
//! Low bins are evaluated on progressively decimated copies of the signal,
//! which keeps every kernel short without changing the constant Q factor.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::fft::convolve_same_centered;
use crate::signal::window::WindowFunction;
use crate::signal::{FrequencyScale, Spectrogram, Waveform};

/// Default hop used by callers that do not care to tune it.
pub const DEFAULT_HOP_S: f64 = 0.010;

struct BinKernel {
    level: usize,
    taps: Vec<Complex64>,
}

fn q_factor(bins_per_octave: usize) -> f64 {
    1.0 / (2f64.powf(1.0 / bins_per_octave as f64) - 1.0)
}

fn build_kernel(freq: f64, rate_at_level: f64, q: f64, level: usize) -> BinKernel {
    let len = ((q * rate_at_level / freq).round() as usize).max(3) | 1;
    let win = WindowFunction::Hann.samples(len);
    let win_sum: f64 = win.iter().sum();
    let scale = 2.0 / win_sum;
    let mid = (len / 2) as isize;
    let taps = (0..len as isize)
        .map(|i| {
            let phase = -2.0 * std::f64::consts::PI * freq * (i - mid) as f64 / rate_at_level;
            Complex64::from_polar(win[i as usize] * scale, phase)
        })
        .collect();
    BinKernel { level, taps }
}

/// Constant-Q magnitude spectrogram. Frame centers fall every `hop_s`
/// seconds starting at t = 0; kernels are zero-padded past the signal
/// edges.
pub fn cqt(
    w: &Waveform,
    bins_per_octave: usize,
    f_min: f64,
    f_max: f64,
    hop_s: f64,
) -> Result<Spectrogram> {
    if w.is_empty() {
        return Err(Error::EmptySignal("cqt input"));
    }
    if bins_per_octave < 1 {
        return Err(Error::InvalidParameter {
            name: "bins_per_octave",
            reason: "must be >= 1".into(),
        });
    }
    let nyquist = w.sample_rate() as f64 / 2.0;
    if !(f_min > 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidFrequencyRange {
            f_min,
            f_max,
            nyquist,
        });
    }
    if hop_s <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "hop_s",
            reason: "must be positive".into(),
        });
    }

    let fs = w.sample_rate() as f64;
    let b = bins_per_octave as f64;
    let n_bins = (b * (f_max / f_min).log2() + 1e-9).floor() as usize + 1;
    let freqs: Vec<f64> = (0..n_bins)
        .map(|k| f_min * 2f64.powf(k as f64 / b))
        .collect();
    let q = q_factor(bins_per_octave);

    // Decimation level per bin: deepest level keeping the bin below
    // 0.38 of that level's sample rate.
    let levels: Vec<usize> = freqs
        .iter()
        .map(|&f| {
            let max_level = (0.38 * fs / f).log2().floor();
            max_level.max(0.0) as usize
        })
        .collect();
    let deepest = levels.iter().copied().max().unwrap_or(0);

    // Build the decimation pyramid. Each stage halves the rate after an
    // anti-alias lowpass whose passband covers every deeper octave.
    let decim_taps = crate::signal::filter::lowpass_taps(0.25, 63, WindowFunction::Blackman);
    let mut pyramid: Vec<Vec<f64>> = Vec::with_capacity(deepest + 1);
    pyramid.push(w.samples().to_vec());
    for level in 1..=deepest {
        let prev = &pyramid[level - 1];
        let filtered = convolve_same_centered(prev, &decim_taps);
        let half: Vec<f64> = filtered.iter().step_by(2).copied().collect();
        pyramid.push(half);
    }

    let kernels: Vec<BinKernel> = freqs
        .iter()
        .zip(levels.iter())
        .map(|(&f, &lvl)| build_kernel(f, fs / (1u64 << lvl) as f64, q, lvl))
        .collect();

    let hop_base = (hop_s * fs).round().max(1.0) as usize;
    let n_frames = (w.len() - 1) / hop_base + 1;

    let rows: Vec<Vec<f64>> = kernels
        .par_iter()
        .map(|kernel| {
            let sig = &pyramid[kernel.level];
            let shift = kernel.level;
            let half = (kernel.taps.len() / 2) as i64;
            (0..n_frames)
                .map(|i| {
                    let c_base = (i * hop_base) as u64;
                    let c = ((c_base + (1u64 << shift) / 2) >> shift) as i64;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (ti, tap) in kernel.taps.iter().enumerate() {
                        let idx = c + ti as i64 - half;
                        if idx >= 0 && (idx as usize) < sig.len() {
                            acc += tap * sig[idx as usize];
                        }
                    }
                    acc.norm()
                })
                .collect()
        })
        .collect();

    let mut magnitudes = Array2::zeros((n_bins, n_frames));
    for (k, row) in rows.into_iter().enumerate() {
        for (t, v) in row.into_iter().enumerate() {
            magnitudes[[k, t]] = v;
        }
    }
    let frame_times = (0..n_frames).map(|i| (i * hop_base) as f64 / fs).collect();
    Ok(Spectrogram {
        magnitudes,
        bin_frequencies: freqs,
        frame_times,
        scale: FrequencyScale::Log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, seconds: f64) -> Waveform {
        let n = (seconds * rate as f64) as usize;
        Waveform::new(
            (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
                .collect(),
            rate,
        )
        .unwrap()
    }

    fn total_per_bin(s: &Spectrogram) -> Vec<f64> {
        (0..s.bins())
            .map(|k| (0..s.frames()).map(|t| s.magnitudes[[k, t]]).sum())
            .collect()
    }

    #[test]
    fn bin_frequencies_are_geometric() {
        let w = Waveform::zeros(8000, 8000);
        let s = cqt(&w, 48, 32.7, 2000.0, 0.01).unwrap();
        let expect_bins = (48.0 * (2000.0f64 / 32.7).log2()).floor() as usize + 1;
        assert_eq!(s.bins(), expect_bins);
        let ratio = 2f64.powf(1.0 / 48.0);
        for k in 1..s.bins() {
            let r = s.bin_frequencies[k] / s.bin_frequencies[k - 1];
            assert!((r - ratio).abs() < 1e-12);
        }
        assert!(*s.bin_frequencies.last().unwrap() <= 2000.0 + 1e-9);
    }

    #[test]
    fn tone_at_bin_center_dominates_that_bin() {
        let b = 24;
        let f_min = 50.0;
        // Bin 30 center.
        let f = f_min * 2f64.powf(30.0 / b as f64);
        let w = tone(f, 8000, 2.0);
        let s = cqt(&w, b, f_min, 2000.0, 0.01).unwrap();
        let totals = total_per_bin(&s);
        let argmax = totals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 30);
    }

    #[test]
    fn octave_doubling_shifts_peak_by_bins_per_octave() {
        let b = 24;
        let f_min = 50.0;
        let f = f_min * 2f64.powf(20.0 / b as f64);
        let s1 = cqt(&tone(f, 8000, 2.0), b, f_min, 2000.0, 0.01).unwrap();
        let s2 = cqt(&tone(2.0 * f, 8000, 2.0), b, f_min, 2000.0, 0.01).unwrap();
        let peak = |s: &Spectrogram| {
            total_per_bin(s)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(peak(&s2), peak(&s1) + b);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let s = cqt(&Waveform::zeros(16000, 8000), 48, 32.7, 2000.0, 0.01).unwrap();
        assert!(s.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn rejects_f_max_above_nyquist() {
        let w = Waveform::zeros(8000, 8000);
        assert!(matches!(
            cqt(&w, 48, 32.7, 4100.0, 0.01),
            Err(Error::InvalidFrequencyRange { .. })
        ));
    }

    #[test]
    fn matches_single_rate_reference() {
        // Independent reference: every kernel evaluated at the base rate.
        let rate = 8000u32;
        let n = 6400;
        let mut samples = vec![0.0; n];
        for (i, v) in samples.iter_mut().enumerate() {
            let t = i as f64 / rate as f64;
            *v = (2.0 * std::f64::consts::PI * 110.0 * t).sin()
                + 0.6 * (2.0 * std::f64::consts::PI * 440.0 * t).sin()
                + 0.3 * (2.0 * std::f64::consts::PI * 1320.0 * t).sin();
        }
        let w = Waveform::new(samples, rate).unwrap();
        let b = 12;
        let (f_min, f_max, hop) = (40.0, 2000.0, 0.02);
        let fast = cqt(&w, b, f_min, f_max, hop).unwrap();

        let q = q_factor(b);
        let fs = rate as f64;
        let hop_base = (hop * fs).round() as usize;
        let mut err2 = 0.0;
        let mut ref2 = 0.0;
        for (k, &f) in fast.bin_frequencies.iter().enumerate() {
            let kern = build_kernel(f, fs, q, 0);
            let half = (kern.taps.len() / 2) as i64;
            for t in 0..fast.frames() {
                let c = (t * hop_base) as i64;
                let mut acc = Complex64::new(0.0, 0.0);
                for (ti, tap) in kern.taps.iter().enumerate() {
                    let idx = c + ti as i64 - half;
                    if idx >= 0 && (idx as usize) < w.len() {
                        acc += tap * w.samples()[idx as usize];
                    }
                }
                let r = acc.norm();
                let d = fast.magnitudes[[k, t]] - r;
                err2 += d * d;
                ref2 += r * r;
            }
        }
        let rel = (err2 / ref2.max(1e-300)).sqrt();
        assert!(rel < 0.02, "relative L2 error {rel}");
    }
}
