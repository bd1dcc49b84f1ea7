//! Parametric utterance synthesis: a glottal pulse train shaped by formant
//! resonators, alternating voiced and unvoiced segments. Not a speech
//! synthesizer; just enough structure for the pipeline to have something
//! real to measure.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::signal::Waveform;
use crate::synth::{subseed, VocalModel, PIPELINE_RATE};

/// Two-pole resonator applied in place.
pub(crate) fn resonate(x: &mut [f64], center_hz: f64, bandwidth_hz: f64, rate: f64) {
    let r = (-std::f64::consts::PI * bandwidth_hz / rate).exp();
    let theta = 2.0 * std::f64::consts::PI * center_hz / rate;
    let a1 = 2.0 * r * theta.cos();
    let a2 = -r * r;
    let g = (1.0 - r) * (1.0 - r); // keeps resonance gain bounded
    let mut y1 = 0.0;
    let mut y2 = 0.0;
    for v in x.iter_mut() {
        let y = g * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// One-pole lowpass, applied twice for a -12 dB/oct glottal roll-off.
fn glottal_shape(x: &mut [f64]) {
    for _ in 0..2 {
        let mut y = 0.0;
        for v in x.iter_mut() {
            y = 0.9 * y + 0.1 * *v;
            *v = y;
        }
    }
}

#[derive(Clone, Copy)]
enum Segment {
    Silence(f64),
    Voiced(f64),
    Unvoiced(f64),
}

fn plan_segments(duration_s: f64, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let mut plan = vec![Segment::Silence(rng.gen_range(0.05..0.12))];
    let mut used = match plan[0] {
        Segment::Silence(d) => d,
        _ => 0.0,
    };
    loop {
        let v = rng.gen_range(0.35..0.70);
        plan.push(Segment::Voiced(v));
        used += v;
        if used >= duration_s {
            break;
        }
        let u = rng.gen_range(0.10..0.20);
        plan.push(Segment::Unvoiced(u));
        used += u;
        if used >= duration_s {
            break;
        }
    }
    plan
}

/// Deterministically synthesizes `duration_s` seconds of vocal-tract
/// output for `model` at the pipeline rate. Voiced stretches are a jittered
/// glottal pulse train through the model's formant cascade; unvoiced
/// stretches carry low-level aspiration noise (at least ~10% of the
/// utterance, so noise statistics can be estimated from it).
pub fn synth_utterance(model: &VocalModel, duration_s: f64, seed: u64) -> Result<Waveform> {
    if !(1.0..=30.0).contains(&duration_s) {
        return Err(Error::InvalidParameter {
            name: "duration_s",
            reason: format!("{duration_s} outside [1, 30] s"),
        });
    }
    model.validate()?;

    let rate = PIPELINE_RATE as f64;
    let n = (duration_s * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, 0x0707_0707));
    let jitter = Normal::new(0.0, 0.008).unwrap();

    let mut out = vec![0.0; n];
    let mut pos = 0usize;
    for seg in plan_segments(duration_s, &mut rng) {
        if pos >= n {
            break;
        }
        match seg {
            Segment::Silence(d) => {
                pos = (pos + (d * rate) as usize).min(n);
            }
            Segment::Voiced(d) => {
                let len = ((d * rate) as usize).min(n - pos);
                let mut seg_buf = vec![0.0; len];
                // Pulse train with per-period jitter and a light vibrato.
                let vib_rate = rng.gen_range(4.0..6.0);
                let vib_phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let mut t = 0.0f64;
                while (t as usize) < len {
                    seg_buf[t as usize] = 1.0;
                    let vib = 1.0
                        + 0.004
                            * (std::f64::consts::TAU * vib_rate * (t / rate) + vib_phase).sin();
                    let f0 = model.pitch_f0 * vib * (1.0 + jitter.sample(&mut rng));
                    t += rate / f0;
                }
                glottal_shape(&mut seg_buf);
                for &(c, bw) in &model.formants {
                    resonate(&mut seg_buf, c, bw, rate);
                }
                // Lip radiation: first difference.
                for i in (1..len).rev() {
                    seg_buf[i] -= seg_buf[i - 1];
                }
                // Attack/release envelope plus slow amplitude wander.
                let edge = (0.03 * rate) as usize;
                let am_rate = rng.gen_range(1.5..3.5);
                let am_phase = rng.gen_range(0.0..std::f64::consts::TAU);
                for (i, v) in seg_buf.iter_mut().enumerate() {
                    let mut env = 1.0;
                    if i < edge {
                        env *= 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / edge as f64).cos();
                    }
                    if len - 1 - i < edge {
                        let j = len - 1 - i;
                        env *= 0.5 - 0.5 * (std::f64::consts::PI * j as f64 / edge as f64).cos();
                    }
                    env *= 1.0
                        + 0.12
                            * (std::f64::consts::TAU * am_rate * (i as f64 / rate) + am_phase)
                                .sin();
                    *v *= env;
                }
                let peak = seg_buf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if peak > 0.0 {
                    let g = 1.0 / peak;
                    for v in seg_buf.iter_mut() {
                        *v *= g;
                    }
                }
                for (i, v) in seg_buf.iter().enumerate() {
                    out[pos + i] = *v;
                }
                pos += len;
            }
            Segment::Unvoiced(d) => {
                let len = ((d * rate) as usize).min(n - pos);
                let mut seg_buf: Vec<f64> =
                    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
                // Fricative-ish band emphasis.
                resonate(&mut seg_buf, 2600.0, 900.0, rate);
                let rms =
                    (seg_buf.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
                if rms > 0.0 {
                    let g = 0.03 / rms;
                    for v in seg_buf.iter_mut() {
                        *v *= g;
                    }
                }
                for (i, v) in seg_buf.iter().enumerate() {
                    out[pos + i] = *v;
                }
                pos += len;
            }
        }
    }

    // Breath floor so no stretch is exactly zero.
    for v in out.iter_mut() {
        *v += rng.gen_range(-1.0..1.0) * 1.5e-4;
    }

    let w = Waveform::new(out, PIPELINE_RATE)?;
    Ok(w.normalize().scaled(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, FrameSpec, WindowFunction};

    fn model() -> VocalModel {
        VocalModel::bank(3, 11)[1].clone()
    }

    #[test]
    fn deterministic_given_seed() {
        let m = model();
        let a = synth_utterance(&m, 2.0, 99).unwrap();
        let b = synth_utterance(&m, 2.0, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_count_matches_duration() {
        let w = synth_utterance(&model(), 4.0, 1).unwrap();
        assert_eq!(w.len(), 32000);
        assert_eq!(w.sample_rate(), 8000);
    }

    #[test]
    fn rejects_out_of_range_duration() {
        assert!(synth_utterance(&model(), 0.5, 1).is_err());
        assert!(synth_utterance(&model(), 31.0, 1).is_err());
    }

    #[test]
    fn pitch_shows_up_as_harmonic_peaks() {
        let mut m = model();
        m.pitch_f0 = 120.0;
        let w = synth_utterance(&m, 4.0, 5).unwrap();
        // 64 ms window -> 15.6 Hz bins; average the voiced spectrum.
        let spec = stft(&w, &FrameSpec::new(64.0, 32.0, WindowFunction::Hann)).unwrap();
        let frame_energy: Vec<f64> = (0..spec.frames())
            .map(|t| (0..spec.bins()).map(|b| spec.magnitudes[[b, t]].powi(2)).sum())
            .collect();
        let emax = frame_energy.iter().cloned().fold(0.0, f64::max);
        let mut avg = vec![0.0; spec.bins()];
        let mut count = 0;
        for (t, &e) in frame_energy.iter().enumerate() {
            if e > 0.2 * emax {
                for (b, slot) in avg.iter_mut().enumerate() {
                    *slot += spec.magnitudes[[b, t]];
                }
                count += 1;
            }
        }
        assert!(count > 0);
        let bin_hz = spec.bin_frequencies[1] - spec.bin_frequencies[0];
        for harmonic in 1..=4 {
            let target = 120.0 * harmonic as f64;
            let lo = spec.nearest_bin(target - 45.0);
            let hi = spec.nearest_bin(target + 45.0);
            let peak = (lo..=hi)
                .max_by(|&a, &b| avg[a].partial_cmp(&avg[b]).unwrap())
                .unwrap();
            let err = (spec.bin_frequencies[peak] - target).abs();
            assert!(
                err <= bin_hz + 1e-9,
                "harmonic {harmonic}: peak at {} Hz, want {target} Hz",
                spec.bin_frequencies[peak]
            );
        }
    }

    #[test]
    fn has_low_energy_material_for_noise_estimation() {
        let w = synth_utterance(&model(), 4.0, 3).unwrap();
        // Count 20 ms frames whose power sits far below the loudest frame.
        let frame = 160;
        let powers: Vec<f64> = w
            .samples()
            .chunks(frame)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64)
            .collect();
        let pmax = powers.iter().cloned().fold(0.0, f64::max);
        let quiet = powers.iter().filter(|&&p| p < 0.01 * pmax).count();
        assert!(
            quiet as f64 >= 0.10 * powers.len() as f64,
            "only {quiet}/{} quiet frames",
            powers.len()
        );
    }
}
