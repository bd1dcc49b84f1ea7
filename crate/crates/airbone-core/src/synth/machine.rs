//! Machine-induced "bone conduction": what the accelerometer picks up when
//! a loudspeaker vibrates the wearable instead of a human skull. Device
//! enclosures resonate, so the capture carries a comb of mid/high-frequency
//! modes plus strong harmonic distortion that human conduction lacks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::filter::apply_spectral_gain;
use crate::signal::Waveform;
use crate::synth::{subseed, voice::resonate};

/// Playback device vibrating the wearable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceProfile {
    LaptopSpeaker,
    PhoneSpeaker,
    ConferenceSpeaker,
}

impl DeviceProfile {
    pub const ALL: [DeviceProfile; 3] = [
        DeviceProfile::LaptopSpeaker,
        DeviceProfile::PhoneSpeaker,
        DeviceProfile::ConferenceSpeaker,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceProfile::LaptopSpeaker => "laptop",
            DeviceProfile::PhoneSpeaker => "phone",
            DeviceProfile::ConferenceSpeaker => "conference",
        }
    }

    pub fn parse(s: &str) -> Result<DeviceProfile> {
        match s {
            "laptop" => Ok(DeviceProfile::LaptopSpeaker),
            "phone" => Ok(DeviceProfile::PhoneSpeaker),
            "conference" => Ok(DeviceProfile::ConferenceSpeaker),
            other => Err(Error::UnknownDeviceProfile(other.to_string())),
        }
    }

    /// Enclosure modes as (center Hz, bandwidth Hz, gain). Modes above the
    /// capture band get cut later; the in-band trio is distinct per device.
    fn resonances(self) -> &'static [(f64, f64, f64)] {
        match self {
            DeviceProfile::LaptopSpeaker => &[
                (700.0, 28.0, 1.0),
                (1250.0, 35.0, 0.85),
                (1850.0, 45.0, 0.9),
                (2600.0, 60.0, 0.5),
            ],
            DeviceProfile::PhoneSpeaker => &[
                (900.0, 30.0, 1.0),
                (1500.0, 40.0, 0.9),
                (1950.0, 48.0, 0.8),
                (3100.0, 70.0, 0.4),
            ],
            DeviceProfile::ConferenceSpeaker => &[
                (550.0, 24.0, 1.0),
                (1000.0, 30.0, 0.8),
                (1600.0, 42.0, 0.9),
                (2800.0, 64.0, 0.5),
            ],
        }
    }
}

/// Renders the vibration a `device_profile` playback of `source_ac`
/// induces on the wearable's accelerometer, already inside the capture
/// band. Deterministic given the seed.
pub fn synth_machine_bc(
    source_ac: &Waveform,
    device_profile: DeviceProfile,
    seed: u64,
) -> Result<Waveform> {
    if source_ac.is_empty() {
        return Err(Error::EmptySignal("machine bc source"));
    }
    let rate = source_ac.sample_rate() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, 0x3AC4_15E5));

    // Speaker-driver distortion: odd harmonics from saturation plus an
    // even term from the suspension asymmetry.
    let peak = source_ac.peak().max(1e-9);
    let mut driven: Vec<f64> = source_ac
        .samples()
        .iter()
        .map(|&x| {
            let u = x / peak;
            (3.0 * u).tanh() * 0.5 + 0.35 * u * u
        })
        .collect();
    // Remove the DC the squaring introduced.
    let mean = driven.iter().sum::<f64>() / driven.len() as f64;
    for v in driven.iter_mut() {
        *v -= mean;
    }

    // Enclosure modes ring on top of a weak direct path.
    let mut out = driven.iter().map(|&v| 0.15 * v).collect::<Vec<f64>>();
    for &(center, bw, gain) in device_profile.resonances() {
        if center >= 0.49 * rate {
            continue;
        }
        let mut mode = driven.clone();
        resonate(&mut mode, center, bw, rate);
        let mode_rms =
            (mode.iter().map(|v| v * v).sum::<f64>() / mode.len() as f64).sqrt();
        if mode_rms > 0.0 {
            let g = gain * 0.4 / mode_rms;
            for (o, m) in out.iter_mut().zip(mode.iter()) {
                *o += g * m;
            }
        }
    }

    // Sensor floor.
    for v in out.iter_mut() {
        *v += rng.gen_range(-1.0..1.0) * 1e-4;
    }

    // Band capture: the accelerometer chain rolls off at 2 kHz.
    let captured = apply_spectral_gain(&Waveform::new(out, source_ac.sample_rate())?, |f| {
        if f <= 1900.0 {
            1.0
        } else if f < 2000.0 {
            let t = (f - 1900.0) / 100.0;
            (0.5 + 0.5 * (std::f64::consts::PI * t).cos()).powi(2)
        } else {
            0.0
        }
    });
    Ok(captured.normalize().scaled(0.4))
}
