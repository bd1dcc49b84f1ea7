//! Scene rendering: turns one clear utterance into a coupled, noisy,
//! possibly attacked air/bone observation pair.
//!
//! The bone path applies the speaker's conduction channel as
//! per-band attenuation ∘ lowpass ∘ (identity + c·x²); the air path adds
//! background voices and environmental noise. Attack scenes substitute
//! the inputs the way the corresponding adversary would.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::filter::apply_spectral_gain;
use crate::signal::stats::noise_gain_for_snr;
use crate::signal::Waveform;
use crate::synth::machine::{synth_machine_bc, DeviceProfile};
use crate::synth::voice::{resonate, synth_utterance};
use crate::synth::{
    subseed, AirBonePair, AttackKind, BcChannel, BcCondition, GroundTruth, SceneSpec, VocalModel,
    PIPELINE_RATE,
};

/// Rendered pair plus the clean components that tests and oracles need.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub pair: AirBonePair,
    /// Air-side signal before noise (what the SNR is measured against).
    pub ac_clean: Waveform,
    /// Bone-side signal before noise, after the injected delay shift.
    pub bc_clean: Waveform,
    /// Device actually used for `crossdomain_machine` scenes.
    pub machine_device: Option<DeviceProfile>,
}

/// Bone-conduction channel: quadratic non-linearity, then the band-limit
/// roll-off, then per-band attenuation. All shaping is zero-phase so the
/// air/bone timing relationship is untouched.
pub fn apply_bc_channel(clear: &Waveform, ch: &BcChannel) -> Waveform {
    let peak = clear.peak().max(1e-9);
    let c = ch.nonlinearity_coeff;
    let nonlinear: Vec<f64> = clear
        .samples()
        .iter()
        .map(|&x| {
            let u = x / peak;
            (u + c * u * u) * peak
        })
        .collect();
    let mut shaped = Waveform::from_parts_unchecked(nonlinear, clear.sample_rate());
    // Remove the DC offset the squaring introduced.
    let mean = shaped.samples().iter().sum::<f64>() / shaped.len().max(1) as f64;
    shaped = Waveform::from_parts_unchecked(
        shaped.samples().iter().map(|v| v - mean).collect(),
        shaped.sample_rate(),
    );

    let cutoff = ch.lowpass_cutoff;
    let gains = ch.attenuation_profile.clone();
    let band_width = cutoff / gains.len() as f64;
    apply_spectral_gain(&shaped, move |f| {
        // Band attenuation, linearly interpolated between band centers.
        let attenuation = if f >= cutoff {
            *gains.last().unwrap()
        } else {
            let pos = (f / band_width - 0.5).max(0.0);
            let i = pos.floor() as usize;
            if i + 1 >= gains.len() {
                gains[gains.len() - 1]
            } else {
                let t = pos - i as f64;
                gains[i] * (1.0 - t) + gains[i + 1] * t
            }
        };
        // Cosine roll-off ending exactly at the cutoff.
        let rolloff_start = 0.9 * cutoff;
        let lowpass = if f <= rolloff_start {
            1.0
        } else if f < cutoff {
            let t = (f - rolloff_start) / (cutoff - rolloff_start);
            0.5 + 0.5 * (std::f64::consts::PI * t).cos()
        } else {
            0.0
        };
        attenuation * lowpass
    })
}

/// Body-motion noise on the accelerometer: a low-frequency filtered random
/// walk plus condition-specific periodic bumps and bursts.
pub fn motion_noise(
    n: usize,
    rate: u32,
    condition: BcCondition,
    rng: &mut ChaCha8Rng,
) -> Waveform {
    let fs = rate as f64;
    // Ornstein-Uhlenbeck base keeps the walk bounded.
    let mut base = vec![0.0; n];
    let mut x = 0.0;
    for v in base.iter_mut() {
        x = 0.995 * x + rng.gen_range(-1.0..1.0);
        *v = x;
    }

    let (walk_gain, burst_rate_hz, burst_gain, lowpass_hz) = match condition {
        BcCondition::Still => (0.3, 0.0, 0.0, 120.0),
        BcCondition::Turning => (1.0, 0.4, 0.6, 140.0),
        BcCondition::Nodding => (0.5, 1.6, 1.2, 150.0),
        BcCondition::Moving => (1.2, 0.9, 0.9, 260.0),
    };

    for v in base.iter_mut() {
        *v *= walk_gain;
    }

    // Bursts: damped oscillations at head-motion resonance frequencies.
    if burst_rate_hz > 0.0 {
        let expected = burst_rate_hz * n as f64 / fs;
        let count = expected.round() as usize;
        for _ in 0..count {
            let start = rng.gen_range(0..n.max(2));
            let f = rng.gen_range(35.0..90.0);
            let decay = rng.gen_range(8.0..20.0);
            let amp = burst_gain * rng.gen_range(5.0..15.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let len = ((5.0 / decay) * fs) as usize;
            for i in 0..len.min(n - start) {
                let t = i as f64 / fs;
                base[start + i] +=
                    amp * (-decay * t).exp() * (std::f64::consts::TAU * f * t + phase).sin();
            }
        }
    }

    // Slow amplitude wander for the sustained-motion conditions.
    if matches!(condition, BcCondition::Turning | BcCondition::Moving) {
        let am = rng.gen_range(0.3..0.8);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        for (i, v) in base.iter_mut().enumerate() {
            *v *= 1.0 + 0.7 * (std::f64::consts::TAU * am * i as f64 / fs + phase).sin();
        }
    }

    let w = Waveform::from_parts_unchecked(base, rate);
    apply_spectral_gain(&w, move |f| {
        if f <= lowpass_hz {
            1.0
        } else if f < lowpass_hz * 1.6 {
            let t = (f - lowpass_hz) / (lowpass_hz * 0.6);
            0.5 + 0.5 * (std::f64::consts::PI * t).cos()
        } else {
            0.0
        }
    })
}

/// Replay/playback coloration: band-limited loudspeaker response with a
/// gentle tilt and a couple of cabinet ripples.
fn replay_coloration(w: &Waveform, rng: &mut ChaCha8Rng) -> Waveform {
    let ripple_f = rng.gen_range(700.0..1100.0);
    let tilt = rng.gen_range(-0.25..-0.1);
    apply_spectral_gain(w, move |f| {
        if f < 120.0 {
            0.2
        } else {
            let tilt_gain = (f / 1000.0).max(0.1).powf(tilt);
            let ripple = 1.0 + 0.25 * (std::f64::consts::TAU * f / ripple_f).sin();
            tilt_gain * ripple
        }
    })
}

fn white_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn attacker_model(victim: &VocalModel, rng: &mut ChaCha8Rng) -> VocalModel {
    let mut bank = VocalModel::bank(16, rng.gen());
    // Keep only models whose pitch is clearly away from the victim's.
    bank.retain(|m| (m.pitch_f0 - victim.pitch_f0).abs() > 15.0);
    let idx = rng.gen_range(0..bank.len());
    let mut m = bank.swap_remove(idx);
    m.speaker_id = format!("attacker_of_{}", victim.speaker_id);
    m
}

/// Renders the coupled observation pair for `scene`. The `clear` utterance
/// is the legitimate user's vocal-tract signal; attack scenes substitute
/// or transform it according to the attack class.
pub fn render_pair_detailed(
    clear: &Waveform,
    model: &VocalModel,
    scene: &SceneSpec,
    seed: u64,
) -> Result<RenderOutput> {
    if clear.is_empty() {
        return Err(Error::InconsistentAttackScene(
            "no source utterance available".into(),
        ));
    }
    if clear.sample_rate() != PIPELINE_RATE {
        return Err(Error::SampleRateMismatch {
            left: clear.sample_rate(),
            right: PIPELINE_RATE,
        });
    }
    let n = clear.len();
    if 2 * scene.delay_samples.unsigned_abs() as usize >= n {
        return Err(Error::InvalidParameter {
            name: "delay_samples",
            reason: format!(
                "|{}| must stay below half the utterance length {}",
                scene.delay_samples, n
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, 0x4E4D_E44D));
    let duration_s = n as f64 / PIPELINE_RATE as f64;

    let mut machine_device = None;
    let (ac_clean, bc_clean): (Waveform, Waveform) = match scene.attack {
        AttackKind::None => (clear.clone(), apply_bc_channel(clear, &model.bc_channel)),
        AttackKind::FalseTrigger => {
            // Ambient speech reaches the microphone while the wearer is
            // silent: no speech-coupled bone signal at all.
            (clear.clone(), Waveform::zeros(n, PIPELINE_RATE))
        }
        AttackKind::AcousticImpersonation => {
            let attacker = attacker_model(model, &mut rng);
            let ac = synth_utterance(&attacker, duration_s, rng.gen())?.truncated(n);
            (ac, Waveform::zeros(n, PIPELINE_RATE))
        }
        AttackKind::AcousticReplay => {
            let ac = replay_coloration(clear, &mut rng);
            (ac, Waveform::zeros(n, PIPELINE_RATE))
        }
        AttackKind::CrossdomainImpersonation => {
            // The attacker wears the device: a coupled pair, wrong person.
            let attacker = attacker_model(model, &mut rng);
            let attacker_clear = synth_utterance(&attacker, duration_s, rng.gen())?.truncated(n);
            let bc = apply_bc_channel(&attacker_clear, &attacker.bc_channel);
            (attacker_clear, bc)
        }
        AttackKind::CrossdomainMachine => {
            // A playback device both emits the audio and vibrates the
            // wearable: the pair is coupled, but the vibration is machinery.
            let device = scene
                .machine_profile
                .unwrap_or_else(|| DeviceProfile::ALL[rng.gen_range(0..3)]);
            machine_device = Some(device);
            let ac = replay_coloration(clear, &mut rng);
            let bc = synth_machine_bc(&ac, device, rng.gen())?;
            (ac, bc)
        }
    };

    // Air side: background voices, then environmental noise at the set SNR.
    let mut ac = ac_clean.clone();
    for _ in 0..scene.background_speakers {
        let bg = attacker_model(model, &mut rng);
        let bg_utt = synth_utterance(&bg, duration_s, rng.gen())?.truncated(n);
        let g = noise_gain_for_snr(ac_clean.samples(), bg_utt.samples(), 12.0);
        ac = ac.add(&bg_utt.scaled(g))?;
    }
    if let Some(snr) = scene.ac_snr_db {
        let noise = white_noise(n, &mut rng);
        let g = noise_gain_for_snr(ac_clean.samples(), &noise, snr);
        let noise = Waveform::from_parts_unchecked(noise.iter().map(|v| v * g).collect(), PIPELINE_RATE);
        ac = ac.add(&noise)?;
    }

    // Bone side: apply the injected offset to the clean part first so the
    // manifest delay is exactly the shift between the clean components.
    let bc_clean_shifted = bc_clean.shifted(scene.delay_samples);
    let mut bc = bc_clean_shifted.clone();
    let silent_bc = matches!(
        scene.attack,
        AttackKind::FalseTrigger | AttackKind::AcousticImpersonation | AttackKind::AcousticReplay
    );
    if silent_bc {
        // Wearer at rest: the accelerometer sees only body motion.
        let level_condition = if scene.bc_condition == BcCondition::Still {
            BcCondition::Turning
        } else {
            scene.bc_condition
        };
        let noise = motion_noise(n, PIPELINE_RATE, level_condition, &mut rng);
        bc = bc.add(&noise.normalize().scaled(0.15))?;
    } else if let Some(snr) = scene.bc_snr_db {
        let noise = motion_noise(n, PIPELINE_RATE, scene.bc_condition, &mut rng);
        let g = noise_gain_for_snr(bc_clean_shifted.samples(), noise.samples(), snr);
        bc = bc.add(&noise.scaled(g))?;
    }

    let ground_truth = GroundTruth::for_attack(scene.attack);
    let pair = AirBonePair::labeled(ac, bc, model.speaker_id.clone(), scene.clone(), ground_truth)?;
    Ok(RenderOutput {
        pair,
        ac_clean,
        bc_clean: bc_clean_shifted,
        machine_device,
    })
}

/// [`render_pair_detailed`] without the diagnostic components.
pub fn render_pair(
    clear: &Waveform,
    model: &VocalModel,
    scene: &SceneSpec,
    seed: u64,
) -> Result<AirBonePair> {
    Ok(render_pair_detailed(clear, model, scene, seed)?.pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::stats::snr_db;
    use crate::signal::{pearson, stft, FrameSpec};

    fn setup() -> (VocalModel, Waveform) {
        let m = VocalModel::bank(4, 21)[2].clone();
        let clear = synth_utterance(&m, 4.0, 77).unwrap();
        (m, clear)
    }

    #[test]
    fn genuine_bc_is_band_limited() {
        let (m, clear) = setup();
        let out = render_pair_detailed(&clear, &m, &SceneSpec::default(), 5).unwrap();
        let s = stft(&out.pair.bc, &FrameSpec::new(32.0, 16.0, crate::signal::WindowFunction::Hann))
            .unwrap();
        let mut above = 0.0;
        let mut total = 0.0;
        for (b, &f) in s.bin_frequencies.iter().enumerate() {
            for t in 0..s.frames() {
                let e = s.magnitudes[[b, t]].powi(2);
                total += e;
                if f > 2000.0 {
                    above += e;
                }
            }
        }
        assert!(above < 0.01 * total, "above-band fraction {}", above / total);
    }

    #[test]
    fn ac_snr_matches_request() {
        let (m, clear) = setup();
        let scene = SceneSpec {
            ac_snr_db: Some(0.0),
            ..SceneSpec::default()
        };
        let out = render_pair_detailed(&clear, &m, &scene, 5).unwrap();
        let noise: Vec<f64> = out
            .pair
            .ac
            .samples()
            .iter()
            .zip(out.ac_clean.samples())
            .map(|(a, c)| a - c)
            .collect();
        let measured = snr_db(out.ac_clean.samples(), &noise);
        assert!(measured.abs() <= 0.5, "snr {measured} dB");
    }

    #[test]
    fn false_trigger_bc_is_uncorrelated_with_speech() {
        let (m, clear) = setup();
        let scene = SceneSpec {
            attack: AttackKind::FalseTrigger,
            ..SceneSpec::default()
        };
        let mut below = 0;
        let trials = 200;
        for seed in 0..trials {
            let out = render_pair_detailed(&clear, &m, &scene, seed).unwrap();
            let spec = FrameSpec::default();
            let sa = stft(&out.pair.ac, &spec).unwrap();
            let sb = stft(&out.pair.bc, &spec).unwrap();
            // Strongest row on each side.
            let top = |s: &crate::signal::Spectrogram| {
                (0..s.bins())
                    .max_by(|&a, &b| {
                        let ea: f64 = (0..s.frames()).map(|t| s.magnitudes[[a, t]].powi(2)).sum();
                        let eb: f64 = (0..s.frames()).map(|t| s.magnitudes[[b, t]].powi(2)).sum();
                        ea.partial_cmp(&eb).unwrap()
                    })
                    .unwrap()
            };
            let ra = sa.row(top(&sa));
            let rb = sb.row(top(&sb));
            let r = pearson(&ra, &rb).unwrap();
            if r.abs() < 0.3 {
                below += 1;
            }
        }
        assert!(
            below as f64 >= 0.95 * trials as f64,
            "only {below}/{trials} trials below 0.3"
        );
    }

    #[test]
    fn injected_delay_shifts_clean_bc() {
        let (m, clear) = setup();
        let scene = SceneSpec {
            delay_samples: 250,
            ..SceneSpec::default()
        };
        let out = render_pair_detailed(&clear, &m, &scene, 5).unwrap();
        let unshifted = apply_bc_channel(&clear, &m.bc_channel);
        // bc_clean leads: sample i of the shifted signal is sample i+250
        // of the unshifted one.
        for i in [0usize, 1000, 20000] {
            let a = out.bc_clean.samples()[i];
            let b = unshifted.samples()[i + 250];
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_oversized_delay() {
        let (m, clear) = setup();
        let scene = SceneSpec {
            delay_samples: clear.len() as i64 / 2 + 1,
            ..SceneSpec::default()
        };
        assert!(render_pair_detailed(&clear, &m, &scene, 5).is_err());
    }

    #[test]
    fn rejects_empty_source() {
        let (m, _) = setup();
        let empty = Waveform::zeros(0, PIPELINE_RATE);
        assert!(render_pair(&empty, &m, &SceneSpec::default(), 1).is_err());
    }

    #[test]
    fn genuine_pair_shares_energy_onsets() {
        let (m, clear) = setup();
        let out = render_pair_detailed(&clear, &m, &SceneSpec::default(), 5).unwrap();
        let spec = FrameSpec::new(20.0, 20.0, crate::signal::WindowFunction::Rectangular);
        let onset = |w: &Waveform| -> Vec<usize> {
            let hop = spec.hop_samples(w.sample_rate()).unwrap();
            let powers: Vec<f64> = w
                .samples()
                .chunks(hop)
                .map(|c| c.iter().map(|v| v * v).sum::<f64>())
                .collect();
            let pmax = powers.iter().cloned().fold(0.0, f64::max);
            let mut onsets = Vec::new();
            let mut active = false;
            for (i, &p) in powers.iter().enumerate() {
                let now = p > 0.05 * pmax;
                if now && !active {
                    onsets.push(i);
                }
                active = now;
            }
            onsets
        };
        let oa = onset(&out.pair.ac);
        let ob = onset(&out.pair.bc);
        assert!(!oa.is_empty() && oa.len() == ob.len());
        for (a, b) in oa.iter().zip(ob.iter()) {
            assert!(
                (*a as i64 - *b as i64).abs() <= 2,
                "onset frames {a} vs {b} drift"
            );
        }
    }
}
