//! STFT-domain Wiener noise suppression with decision-directed SNR
//! estimation. The noise statistics come from a caller-supplied profile,
//! normally the unvoiced segments of the recording.

use crate::error::{Error, Result};
use crate::signal::stft::stft_complex;
use crate::signal::{FrameSpec, Waveform, WindowFunction};

const SMOOTHING: f64 = 0.98;
const GAIN_FLOOR: f64 = 0.05;

fn analysis_spec(sample_rate: u32) -> FrameSpec {
    // 32 ms frames, 50% overlap.
    let _ = sample_rate;
    FrameSpec::new(32.0, 16.0, WindowFunction::Hann)
}

/// Mean per-bin noise power of the profile under the analysis framing.
fn noise_psd(profile: &Waveform, spec: &FrameSpec) -> Result<Vec<f64>> {
    let win = spec.window_samples(profile.sample_rate())?;
    let padded = if profile.len() < win {
        let mut s = profile.samples().to_vec();
        s.resize(win, 0.0);
        Waveform::new(s, profile.sample_rate())?
    } else {
        profile.clone()
    };
    let frames = stft_complex(&padded, spec)?;
    let bins = frames.nfft / 2 + 1;
    let mut psd = vec![0.0; bins];
    for frame in &frames.frames {
        for (k, c) in frame.iter().enumerate() {
            psd[k] += c.norm_sqr();
        }
    }
    let n = frames.frames.len().max(1) as f64;
    for v in psd.iter_mut() {
        *v /= n;
    }
    Ok(psd)
}

/// Suppresses the noise characterized by `noise_profile` from `w`.
/// Output length equals input length. A zero-power profile leaves the
/// signal untouched (unit gain everywhere).
pub fn wiener_denoise(w: &Waveform, noise_profile: &Waveform) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::EmptySignal("wiener input"));
    }
    if noise_profile.is_empty() {
        return Err(Error::EmptySignal("wiener noise profile"));
    }
    if w.sample_rate() != noise_profile.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: w.sample_rate(),
            right: noise_profile.sample_rate(),
        });
    }

    let spec = analysis_spec(w.sample_rate());
    let win = spec.window_samples(w.sample_rate())?;
    let hop = spec.hop_samples(w.sample_rate())?;

    // Pad a full window on both ends so every real sample gets complete
    // overlap coverage; edge samples under a lone taper would otherwise
    // amplify spectral-modification leakage when divided by taper².
    let body = win + w.len();
    let padded_len = ((body + hop - 1) / hop) * hop + win;
    let mut padded = vec![0.0; win];
    padded.extend_from_slice(w.samples());
    padded.resize(padded_len, 0.0);
    let padded = Waveform::new(padded, w.sample_rate())?;

    let frames = stft_complex(&padded, &spec)?;
    let psd = noise_psd(noise_profile, &spec)?;
    let psd_mean = psd.iter().sum::<f64>() / psd.len() as f64;
    let bins = frames.nfft / 2 + 1;

    // Decision-directed a-priori SNR per bin.
    let mut prev_clean_power = vec![0.0; bins];
    let mut first = true;
    let taper = spec.window_function.samples(win);
    let mut out = vec![0.0; padded_len];
    let mut norm = vec![0.0; padded_len];

    let mut ifft_buf = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); frames.nfft];
    for (t, frame) in frames.frames.iter().enumerate() {
        let mut gains = vec![1.0; bins];
        for k in 0..bins {
            let pn = psd[k];
            if pn <= 1e-14 * psd_mean.max(1e-300) || pn == 0.0 {
                gains[k] = 1.0;
                continue;
            }
            let gamma = frame[k].norm_sqr() / pn;
            let inst = (gamma - 1.0).max(0.0);
            let xi = if first {
                inst
            } else {
                SMOOTHING * prev_clean_power[k] / pn + (1.0 - SMOOTHING) * inst
            };
            gains[k] = (xi / (1.0 + xi)).max(GAIN_FLOOR).min(1.0);
        }
        for k in 0..bins {
            prev_clean_power[k] = (gains[k] * frame[k].norm()).powi(2);
        }
        first = false;

        // Rebuild the frame with the gained spectrum.
        for v in ifft_buf.iter_mut() {
            *v = rustfft::num_complex::Complex64::new(0.0, 0.0);
        }
        for k in 0..bins {
            ifft_buf[k] = frame[k] * gains[k];
        }
        for k in 1..frames.nfft / 2 {
            ifft_buf[frames.nfft - k] = ifft_buf[k].conj();
        }
        crate::signal::fft::fft_inverse(&mut ifft_buf);

        let start = t * hop;
        for i in 0..win {
            out[start + i] += ifft_buf[i].re * taper[i];
            norm[start + i] += taper[i] * taper[i];
        }
    }

    let mut result = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let p = win + i;
        result.push(if norm[p] > 1e-8 { out[p] / norm[p] } else { out[p] });
    }
    Waveform::new(result, w.sample_rate())
}

/// Concatenation of the lowest-energy analysis frames of `w`, used as a
/// noise profile when no separate noise recording exists.
pub fn estimate_noise_profile(w: &Waveform) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::EmptySignal("noise profile source"));
    }
    let spec = analysis_spec(w.sample_rate());
    let win = spec.window_samples(w.sample_rate())?;
    let hop = spec.hop_samples(w.sample_rate())?;
    if w.len() < 2 * win {
        return Ok(w.clone());
    }
    let samples = w.samples();
    let n_frames = (w.len() - win) / hop + 1;
    let mut energies: Vec<(usize, f64)> = (0..n_frames)
        .map(|t| {
            let start = t * hop;
            let e = samples[start..start + win].iter().map(|v| v * v).sum::<f64>();
            (t, e)
        })
        .collect();
    energies.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let keep = (n_frames / 10).max(2).min(n_frames);
    let mut chosen: Vec<usize> = energies[..keep].iter().map(|&(t, _)| t).collect();
    chosen.sort_unstable();
    let mut profile = Vec::with_capacity(keep * win);
    for t in chosen {
        profile.extend_from_slice(&samples[t * hop..t * hop + win]);
    }
    Waveform::new(profile, w.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::stats::snr_db;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tone(freq: f64, rate: u32, seconds: f64) -> Vec<f64> {
        let n = (seconds * rate as f64) as usize;
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn improves_snr_on_noisy_tone() {
        let rate = 8000;
        let clean = tone(440.0, rate, 2.0);
        let noise = white(clean.len(), 7);
        let gain = crate::signal::stats::noise_gain_for_snr(&clean, &noise, 0.0);
        let noisy: Vec<f64> = clean
            .iter()
            .zip(noise.iter())
            .map(|(c, n)| c + n * gain)
            .collect();
        let w = Waveform::new(noisy, rate).unwrap();
        let profile =
            Waveform::new(noise[..8000].iter().map(|v| v * gain).collect(), rate).unwrap();

        let out = wiener_denoise(&w, &profile).unwrap();
        assert_eq!(out.len(), w.len());
        let residual: Vec<f64> = out
            .samples()
            .iter()
            .zip(clean.iter())
            .map(|(o, c)| o - c)
            .collect();
        let out_snr = snr_db(&clean, &residual);
        assert!(out_snr >= 3.0, "output snr {out_snr} dB");
    }

    #[test]
    fn zero_profile_is_identity() {
        let rate = 8000;
        let w = Waveform::new(tone(300.0, rate, 1.0), rate).unwrap();
        let profile = Waveform::zeros(4000, rate);
        let out = wiener_denoise(&w, &profile).unwrap();
        for (a, b) in out.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn pure_noise_does_not_gain_energy() {
        let rate = 8000;
        let noise = white(16000, 3);
        let w = Waveform::new(noise.clone(), rate).unwrap();
        let profile = Waveform::new(noise[..8000].to_vec(), rate).unwrap();
        let out = wiener_denoise(&w, &profile).unwrap();
        assert!(out.rms() <= w.rms() * (1.0 + 1e-9));
    }

    #[test]
    fn rejects_rate_mismatch() {
        let w = Waveform::zeros(1000, 8000);
        let p = Waveform::zeros(1000, 4000);
        assert!(matches!(
            wiener_denoise(&w, &p),
            Err(Error::SampleRateMismatch { .. })
        ));
    }
}
