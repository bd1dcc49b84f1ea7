//! Synthetic air/bone corpus generation.
//!
//! Speaker models produce a "clear" vocal-tract signal; the renderer
//! derives the coupled air- and bone-conduction observations from it,
//! including noise, injected delay, and the attack scenarios the
//! authentication pipeline must withstand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

pub mod corpus;
pub mod machine;
pub mod render;
pub mod voice;

pub use corpus::{build_corpus, read_manifest, Corpus, CorpusParams, ManifestEntry, SceneMix};
pub use machine::{synth_machine_bc, DeviceProfile};
pub use render::{render_pair, render_pair_detailed, RenderOutput};
pub use voice::synth_utterance;

/// Everything in the pipeline runs at this rate after initialization.
pub const PIPELINE_RATE: u32 = 8000;

/// Bone-conduction transmission channel of one person: a band-limiting,
/// per-band attenuating, mildly non-linear path from vocal-tract signal
/// to skin-surface vibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcChannel {
    /// Upper band edge in Hz; human bone conduction dies out by 2 kHz.
    pub lowpass_cutoff: f64,
    /// Gains in (0, 1] for equal-width bands spanning [0, lowpass_cutoff].
    pub attenuation_profile: Vec<f64>,
    /// Strength of the quadratic term in the conduction non-linearity.
    pub nonlinearity_coeff: f64,
}

impl BcChannel {
    pub fn validate(&self) -> Result<()> {
        if !(self.lowpass_cutoff > 0.0 && self.lowpass_cutoff <= 2000.0) {
            return Err(Error::InvalidParameter {
                name: "lowpass_cutoff",
                reason: format!("{} Hz outside (0, 2000]", self.lowpass_cutoff),
            });
        }
        if self.attenuation_profile.is_empty()
            || self
                .attenuation_profile
                .iter()
                .any(|&g| !(g > 0.0 && g <= 1.0))
        {
            return Err(Error::InvalidParameter {
                name: "attenuation_profile",
                reason: "gains must be in (0, 1]".into(),
            });
        }
        if self.nonlinearity_coeff < 0.0 {
            return Err(Error::InvalidParameter {
                name: "nonlinearity_coeff",
                reason: "must be >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Parametric speaker: glottal pitch, formant resonances, and the
/// speaker's bone-conduction channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocalModel {
    pub speaker_id: String,
    pub pitch_f0: f64,
    /// (center Hz, bandwidth Hz) pairs, centers below 4 kHz.
    pub formants: Vec<(f64, f64)>,
    pub bc_channel: BcChannel,
}

impl VocalModel {
    pub fn validate(&self) -> Result<()> {
        if !(60.0..=400.0).contains(&self.pitch_f0) {
            return Err(Error::InvalidParameter {
                name: "pitch_f0",
                reason: format!("{} Hz outside [60, 400]", self.pitch_f0),
            });
        }
        if self.formants.iter().any(|&(c, _)| c >= 4000.0) {
            return Err(Error::InvalidParameter {
                name: "formants",
                reason: "centers must stay below 4 kHz".into(),
            });
        }
        self.bc_channel.validate()
    }

    /// Deterministic bank of `n` mutually distinct speakers. Pitch and the
    /// bone-channel parameters are stratified across their ranges so no two
    /// speakers share a channel.
    pub fn bank(n: usize, seed: u64) -> Vec<VocalModel> {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, 0x5EED_BA5E + i as u64));
            let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
            let pitch = 95.0 + frac * 170.0 + rng.gen_range(-4.0..4.0);
            let formants = vec![
                (rng.gen_range(320.0..820.0), rng.gen_range(60.0..110.0)),
                (rng.gen_range(950.0..2200.0), rng.gen_range(80.0..140.0)),
                (rng.gen_range(2400.0..3400.0), rng.gen_range(120.0..200.0)),
            ];
            let cutoff = 1350.0 + frac * 600.0 + rng.gen_range(-20.0..20.0);
            let bands = 8;
            let attenuation_profile = (0..bands)
                .map(|b| {
                    // Downward tilt toward the band edge with per-speaker texture.
                    let tilt = 1.0 - 0.75 * b as f64 / (bands - 1) as f64;
                    (tilt * rng.gen_range(0.55..1.0)).clamp(0.05, 1.0)
                })
                .collect();
            let nonlinearity = 0.05 + frac * 0.28 + rng.gen_range(-0.015..0.015);
            out.push(VocalModel {
                speaker_id: format!("spk{i:03}"),
                pitch_f0: pitch,
                formants,
                bc_channel: BcChannel {
                    lowpass_cutoff: cutoff.min(2000.0),
                    attenuation_profile,
                    nonlinearity_coeff: nonlinearity.max(0.0),
                },
            });
        }
        out
    }
}

/// Attack class of a rendered scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    FalseTrigger,
    AcousticImpersonation,
    AcousticReplay,
    CrossdomainImpersonation,
    CrossdomainMachine,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::FalseTrigger => "false_trigger",
            AttackKind::AcousticImpersonation => "acoustic_impersonation",
            AttackKind::AcousticReplay => "acoustic_replay",
            AttackKind::CrossdomainImpersonation => "crossdomain_impersonation",
            AttackKind::CrossdomainMachine => "crossdomain_machine",
        }
    }
}

/// Wearer motion while speaking; shapes the bone-side noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BcCondition {
    #[default]
    Still,
    Turning,
    Nodding,
    Moving,
}

impl BcCondition {
    pub const ALL: [BcCondition; 4] = [
        BcCondition::Still,
        BcCondition::Turning,
        BcCondition::Nodding,
        BcCondition::Moving,
    ];

    pub fn index(self) -> usize {
        match self {
            BcCondition::Still => 0,
            BcCondition::Turning => 1,
            BcCondition::Nodding => 2,
            BcCondition::Moving => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        ["still", "turning", "nodding", "moving"][self.index()]
    }
}

/// One rendering scenario: noise levels, background voices, injected
/// AC-vs-BC offset, motion condition, and the attack class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// White-noise level on the air side; `None` means clean.
    pub ac_snr_db: Option<f64>,
    /// Motion-noise level on the bone side; `None` means clean.
    pub bc_snr_db: Option<f64>,
    pub background_speakers: usize,
    /// Samples by which the BC capture leads the AC capture. Negative
    /// values mean the BC side lags.
    pub delay_samples: i64,
    pub attack: AttackKind,
    #[serde(default)]
    pub bc_condition: BcCondition,
    /// Playback device for `crossdomain_machine`; picked from the seed
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine_profile: Option<machine::DeviceProfile>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            ac_snr_db: None,
            bc_snr_db: None,
            background_speakers: 0,
            delay_samples: 0,
            attack: AttackKind::None,
            bc_condition: BcCondition::Still,
            machine_profile: None,
        }
    }
}

/// Label a rendered pair carries through evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroundTruth {
    Genuine,
    FalseTrigger,
    Attack(AttackKind),
}

impl GroundTruth {
    pub fn for_attack(attack: AttackKind) -> GroundTruth {
        match attack {
            AttackKind::None => GroundTruth::Genuine,
            AttackKind::FalseTrigger => GroundTruth::FalseTrigger,
            other => GroundTruth::Attack(other),
        }
    }

    pub fn is_genuine(self) -> bool {
        self == GroundTruth::Genuine
    }

    pub fn label(self) -> String {
        match self {
            GroundTruth::Genuine => "genuine".to_string(),
            GroundTruth::FalseTrigger => "false_trigger".to_string(),
            GroundTruth::Attack(kind) => format!("attack:{}", kind.as_str()),
        }
    }

    pub fn parse(s: &str) -> Result<GroundTruth> {
        match s {
            "genuine" => Ok(GroundTruth::Genuine),
            "false_trigger" => Ok(GroundTruth::FalseTrigger),
            other => {
                let kind =
                    other
                        .strip_prefix("attack:")
                        .ok_or_else(|| Error::InvalidParameter {
                            name: "ground_truth",
                            reason: format!("unknown label `{other}`"),
                        })?;
                let kind = match kind {
                    "acoustic_impersonation" => AttackKind::AcousticImpersonation,
                    "acoustic_replay" => AttackKind::AcousticReplay,
                    "crossdomain_impersonation" => AttackKind::CrossdomainImpersonation,
                    "crossdomain_machine" => AttackKind::CrossdomainMachine,
                    "false_trigger" => AttackKind::FalseTrigger,
                    _ => {
                        return Err(Error::InvalidParameter {
                            name: "ground_truth",
                            reason: format!("unknown attack `{kind}`"),
                        })
                    }
                };
                Ok(GroundTruth::Attack(kind))
            }
        }
    }
}

impl Serialize for GroundTruth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for GroundTruth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        GroundTruth::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A synchronized AC/BC utterance pair, optionally carrying its synthetic
/// provenance (absent for pairs built from live recordings).
#[derive(Debug, Clone)]
pub struct AirBonePair {
    pub ac: Waveform,
    pub bc: Waveform,
    pub speaker_id: Option<String>,
    pub scene: Option<SceneSpec>,
    pub ground_truth: Option<GroundTruth>,
}

impl AirBonePair {
    /// Pair with full synthetic provenance; enforces label consistency
    /// with the scene's attack class.
    pub fn labeled(
        ac: Waveform,
        bc: Waveform,
        speaker_id: String,
        scene: SceneSpec,
        ground_truth: GroundTruth,
    ) -> Result<Self> {
        if ac.is_empty() || bc.is_empty() {
            return Err(Error::EmptySignal("air/bone pair"));
        }
        if ground_truth != GroundTruth::for_attack(scene.attack) {
            return Err(Error::InvalidParameter {
                name: "ground_truth",
                reason: format!(
                    "label {} inconsistent with attack {}",
                    ground_truth.label(),
                    scene.attack.as_str()
                ),
            });
        }
        Ok(AirBonePair {
            ac,
            bc,
            speaker_id: Some(speaker_id),
            scene: Some(scene),
            ground_truth: Some(ground_truth),
        })
    }

    /// Pair without provenance, e.g. freshly initialized live input.
    pub fn unlabeled(ac: Waveform, bc: Waveform) -> Result<Self> {
        if ac.is_empty() || bc.is_empty() {
            return Err(Error::EmptySignal("air/bone pair"));
        }
        Ok(AirBonePair {
            ac,
            bc,
            speaker_id: None,
            scene: None,
            ground_truth: None,
        })
    }
}

/// Stable per-entity sub-seed derivation (splitmix64 over seed ⊕ salt).
pub(crate) fn subseed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_speakers_are_valid_and_distinct() {
        let bank = VocalModel::bank(8, 7);
        assert_eq!(bank.len(), 8);
        for m in &bank {
            m.validate().unwrap();
        }
        for i in 0..bank.len() {
            for j in i + 1..bank.len() {
                assert_ne!(
                    bank[i].bc_channel, bank[j].bc_channel,
                    "speakers {i} and {j} share a bone channel"
                );
            }
        }
    }

    #[test]
    fn bank_is_deterministic() {
        assert_eq!(VocalModel::bank(4, 42), VocalModel::bank(4, 42));
    }

    #[test]
    fn ground_truth_labels_round_trip() {
        for gt in [
            GroundTruth::Genuine,
            GroundTruth::FalseTrigger,
            GroundTruth::Attack(AttackKind::AcousticReplay),
            GroundTruth::Attack(AttackKind::CrossdomainMachine),
        ] {
            assert_eq!(GroundTruth::parse(&gt.label()).unwrap(), gt);
        }
    }

    #[test]
    fn labeled_pair_rejects_inconsistent_ground_truth() {
        let w = Waveform::zeros(100, PIPELINE_RATE);
        let scene = SceneSpec {
            attack: AttackKind::FalseTrigger,
            ..SceneSpec::default()
        };
        let r = AirBonePair::labeled(w.clone(), w, "spk000".into(), scene, GroundTruth::Genuine);
        assert!(r.is_err());
    }
}
