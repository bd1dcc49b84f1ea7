//! Short-time Fourier transform with one-sided magnitude output.
//!
//! The FFT length is the next power of two at or above the window length;
//! frames are zero-padded up to it.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::fft::{fft_forward, next_pow2};
use crate::signal::{FrameSpec, FrequencyScale, Spectrogram, Waveform};
use ndarray::Array2;

pub(crate) struct StftFrames {
    /// One complex row per frame, `nfft/2 + 1` bins each.
    pub frames: Vec<Vec<Complex64>>,
    pub nfft: usize,
    pub window_samples: usize,
    pub hop_samples: usize,
}

/// Frames, windows, and transforms `w`; shared by [`stft`] and the Wiener
/// denoiser (which needs phases).
pub(crate) fn stft_complex(w: &Waveform, spec: &FrameSpec) -> Result<StftFrames> {
    let win = spec.window_samples(w.sample_rate())?;
    let hop = spec.hop_samples(w.sample_rate())?;
    if w.len() < win {
        return Err(Error::SignalTooShort {
            needed: win,
            got: w.len(),
        });
    }
    let nfft = next_pow2(win);
    let taper = spec.window_function.samples(win);
    let n_frames = (w.len() - win) / hop + 1;
    let samples = w.samples();

    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for t in 0..n_frames {
        let start = t * hop;
        for v in buf.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        for i in 0..win {
            buf[i] = Complex64::new(samples[start + i] * taper[i], 0.0);
        }
        fft_forward(&mut buf);
        frames.push(buf[..nfft / 2 + 1].to_vec());
    }
    Ok(StftFrames {
        frames,
        nfft,
        window_samples: win,
        hop_samples: hop,
    })
}

/// Magnitude spectrogram of `w` under the given framing.
pub fn stft(w: &Waveform, spec: &FrameSpec) -> Result<Spectrogram> {
    let f = stft_complex(w, spec)?;
    let bins = f.nfft / 2 + 1;
    let n_frames = f.frames.len();
    let fs = w.sample_rate() as f64;

    let mut magnitudes = Array2::zeros((bins, n_frames));
    for (t, frame) in f.frames.iter().enumerate() {
        for (k, c) in frame.iter().enumerate() {
            magnitudes[[k, t]] = c.norm();
        }
    }
    let bin_frequencies = (0..bins).map(|k| k as f64 * fs / f.nfft as f64).collect();
    let frame_times = (0..n_frames)
        .map(|t| (t * f.hop_samples) as f64 / fs + (f.window_samples as f64 - 1.0) / (2.0 * fs))
        .collect();
    Ok(Spectrogram {
        magnitudes,
        bin_frequencies,
        frame_times,
        scale: FrequencyScale::Linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::WindowFunction;

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

    #[test]
    fn frame_count_matches_formula() {
        let w = Waveform::zeros(1000, 8000);
        let spec = FrameSpec::default(); // 40-sample window, 32-sample hop
        let s = stft(&w, &spec).unwrap();
        assert_eq!(s.frames(), (1000 - 40) / 32 + 1);
        assert_eq!(s.bins(), 33); // nfft 64
    }

    #[test]
    fn tone_lands_in_the_right_bin() {
        let w = tone(1000.0, 8000, 1.0);
        let s = stft(&w, &FrameSpec::default()).unwrap();
        let bin_width = s.bin_frequencies[1] - s.bin_frequencies[0];
        for t in 0..s.frames() {
            let argmax = (0..s.bins())
                .max_by(|&a, &b| s.magnitudes[[a, t]].partial_cmp(&s.magnitudes[[b, t]]).unwrap())
                .unwrap();
            assert!((s.bin_frequencies[argmax] - 1000.0).abs() <= bin_width);
        }
    }

    #[test]
    fn zero_signal_gives_zero_magnitudes() {
        let s = stft(&Waveform::zeros(4000, 8000), &FrameSpec::default()).unwrap();
        assert!(s.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn impulse_energy_sits_in_its_frame() {
        let mut samples = vec![0.0; 4000];
        let k = 1700;
        samples[k] = 1.0;
        let w = Waveform::new(samples, 8000).unwrap();
        let s = stft(&w, &FrameSpec::default()).unwrap();
        let per_frame: Vec<f64> = (0..s.frames())
            .map(|t| (0..s.bins()).map(|b| s.magnitudes[[b, t]].powi(2)).sum())
            .collect();
        let best = per_frame
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        // Frame `best` must cover sample k.
        let start = best * 32;
        assert!(start <= k && k < start + 40, "frame {best} misses impulse");
    }

    #[test]
    fn parseval_energy_bookkeeping() {
        let w = tone(713.0, 8000, 0.5);
        let spec = FrameSpec::default();
        let frames = stft_complex(&w, &spec).unwrap();
        let taper = WindowFunction::Hann.samples(frames.window_samples);
        let mut spec_energy = 0.0;
        let mut time_energy = 0.0;
        for (t, row) in frames.frames.iter().enumerate() {
            let mut e = row[0].norm_sqr() + row[frames.nfft / 2].norm_sqr();
            for c in &row[1..frames.nfft / 2] {
                e += 2.0 * c.norm_sqr();
            }
            spec_energy += e / frames.nfft as f64;
            let start = t * frames.hop_samples;
            for i in 0..frames.window_samples {
                let v = w.samples()[start + i] * taper[i];
                time_energy += v * v;
            }
        }
        assert!(
            (spec_energy - time_energy).abs() <= 0.01 * time_energy,
            "{spec_energy} vs {time_energy}"
        );
    }

    #[test]
    fn rejects_too_short_signal() {
        let w = Waveform::zeros(10, 8000);
        assert!(matches!(
            stft(&w, &FrameSpec::default()),
            Err(Error::SignalTooShort { .. })
        ));
    }
}
