//! Corpus assembly: scene sampling, deterministic generation, and the
//! on-disk layout (WAV air signals, accelerometer bone records, JSON
//! manifest).

use std::fs;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::accel::{write_accel_csv, write_accel_f32, AccelRecord};
use crate::signal::wav::write_wav;
use crate::signal::Waveform;
use crate::synth::render::{motion_noise, render_pair_detailed, RenderOutput};
use crate::synth::voice::synth_utterance;
use crate::synth::{
    subseed, AttackKind, BcCondition, GroundTruth, SceneSpec, VocalModel, PIPELINE_RATE,
};

/// Scenario sampling weights and parameter pools for corpus generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneMix {
    pub genuine: f64,
    pub false_trigger: f64,
    pub acoustic_impersonation: f64,
    pub acoustic_replay: f64,
    pub crossdomain_impersonation: f64,
    pub crossdomain_machine: f64,
    /// SNR pools sampled uniformly; `null` entries mean clean.
    pub ac_snr_db: Vec<Option<f64>>,
    pub bc_snr_db: Vec<Option<f64>>,
    /// Injected BC-leads-AC offset range in samples (inclusive).
    pub delay_range: (i64, i64),
    /// Weights over still/turning/nodding/moving.
    pub condition_weights: [f64; 4],
    pub background_speakers: usize,
}

impl Default for SceneMix {
    fn default() -> Self {
        SceneMix {
            genuine: 1.0,
            false_trigger: 0.0,
            acoustic_impersonation: 0.0,
            acoustic_replay: 0.0,
            crossdomain_impersonation: 0.0,
            crossdomain_machine: 0.0,
            ac_snr_db: vec![None],
            bc_snr_db: vec![None],
            delay_range: (-200, 200),
            condition_weights: [0.55, 0.15, 0.15, 0.15],
            background_speakers: 0,
        }
    }
}

impl SceneMix {
    /// Pure genuine scenes, clean and undelayed.
    pub fn clean_genuine() -> Self {
        SceneMix {
            delay_range: (0, 0),
            condition_weights: [1.0, 0.0, 0.0, 0.0],
            ..SceneMix::default()
        }
    }

    fn sample_attack(&self, rng: &mut ChaCha8Rng) -> AttackKind {
        let weights = [
            (AttackKind::None, self.genuine),
            (AttackKind::FalseTrigger, self.false_trigger),
            (AttackKind::AcousticImpersonation, self.acoustic_impersonation),
            (AttackKind::AcousticReplay, self.acoustic_replay),
            (
                AttackKind::CrossdomainImpersonation,
                self.crossdomain_impersonation,
            ),
            (AttackKind::CrossdomainMachine, self.crossdomain_machine),
        ];
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut x = rng.gen_range(0.0..total.max(1e-12));
        for (kind, w) in weights {
            if x < w {
                return kind;
            }
            x -= w;
        }
        AttackKind::None
    }

    fn sample_condition(&self, rng: &mut ChaCha8Rng) -> BcCondition {
        let total: f64 = self.condition_weights.iter().sum();
        let mut x = rng.gen_range(0.0..total.max(1e-12));
        for (i, &w) in self.condition_weights.iter().enumerate() {
            if x < w {
                return BcCondition::ALL[i];
            }
            x -= w;
        }
        BcCondition::Still
    }

    /// Draws one scene.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> SceneSpec {
        let attack = self.sample_attack(rng);
        let ac = self.ac_snr_db[rng.gen_range(0..self.ac_snr_db.len())];
        let bc = self.bc_snr_db[rng.gen_range(0..self.bc_snr_db.len())];
        let delay = if self.delay_range.0 == self.delay_range.1 {
            self.delay_range.0
        } else {
            rng.gen_range(self.delay_range.0..=self.delay_range.1)
        };
        SceneSpec {
            ac_snr_db: ac,
            bc_snr_db: bc,
            background_speakers: self.background_speakers,
            delay_samples: delay,
            attack,
            bc_condition: self.sample_condition(rng),
            machine_profile: None,
        }
    }
}

/// Generation parameters for one corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusParams {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub duration_s: f64,
    pub scene_mix: SceneMix,
    pub seed: u64,
    /// `"f32"` (binary + sidecar) or `"csv"` accelerometer files.
    pub accel_format: String,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            n_speakers: 8,
            utterances_per_speaker: 10,
            duration_s: 8.5,
            scene_mix: SceneMix::default(),
            seed: 0,
            accel_format: "f32".into(),
        }
    }
}

/// One manifest row; exactly what lands in `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub speaker_id: String,
    pub ac_path: String,
    pub bc_path: String,
    pub scene: SceneSpec,
    pub ground_truth: GroundTruth,
    pub delay_samples: i64,
}

/// One generated utterance pair, still in memory.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub pair_id: String,
    pub speaker_index: usize,
    pub speaker_id: String,
    pub scene: SceneSpec,
    pub ground_truth: GroundTruth,
    pub output: RenderOutput,
}

/// A fully generated corpus plus the speaker bank that produced it.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub speakers: Vec<VocalModel>,
    pub entries: Vec<CorpusEntry>,
    pub params: CorpusParams,
}

impl Corpus {
    /// Deterministically generates `n_speakers × utterances_per_speaker`
    /// pairs. Parallel across entries; each entry depends only on the
    /// corpus seed and its index.
    pub fn generate(params: &CorpusParams) -> Result<Corpus> {
        if params.n_speakers < 2 {
            return Err(Error::TooFewSpeakers {
                needed: 2,
                got: params.n_speakers,
            });
        }
        let speakers = VocalModel::bank(params.n_speakers, subseed(params.seed, 0xBA4C));
        let total = params.n_speakers * params.utterances_per_speaker;
        let entries: Result<Vec<CorpusEntry>> = (0..total)
            .into_par_iter()
            .map(|idx| {
                let speaker_index = idx / params.utterances_per_speaker;
                let model = &speakers[speaker_index];
                let entry_seed = subseed(params.seed, 0xE117 + idx as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(entry_seed);
                let mut scene = params.scene_mix.sample(&mut rng);
                if scene.attack == AttackKind::CrossdomainMachine && scene.machine_profile.is_none()
                {
                    scene.machine_profile = Some(
                        crate::synth::machine::DeviceProfile::ALL[idx % 3],
                    );
                }
                let clear = synth_utterance(model, params.duration_s, rng.gen())?;
                let output = render_pair_detailed(&clear, model, &scene, rng.gen())?;
                Ok(CorpusEntry {
                    pair_id: format!("p{idx:05}"),
                    speaker_index,
                    speaker_id: model.speaker_id.clone(),
                    ground_truth: GroundTruth::for_attack(scene.attack),
                    scene,
                    output,
                })
            })
            .collect();
        Ok(Corpus {
            speakers,
            entries: entries?,
            params: params.clone(),
        })
    }

    /// Writes WAV/accelerometer files plus `manifest.json` under `dir`;
    /// returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let wav_dir = dir.join("wav");
        let accel_dir = dir.join("accel");
        fs::create_dir_all(&wav_dir).map_err(|e| Error::io(wav_dir.display().to_string(), e))?;
        fs::create_dir_all(&accel_dir)
            .map_err(|e| Error::io(accel_dir.display().to_string(), e))?;

        let mut manifest = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            let ac_rel = format!("wav/{}.ac.wav", entry.pair_id);
            write_wav(&dir.join(&ac_rel), &entry.output.pair.ac)?;

            let record = embed_in_accel(
                &entry.output.pair.bc,
                entry.scene.bc_condition,
                subseed(self.params.seed, 0xACCE1 + manifest.len() as u64),
            )?;
            let bc_rel = if self.params.accel_format == "csv" {
                let rel = format!("accel/{}.bc.csv", entry.pair_id);
                write_accel_csv(&dir.join(&rel), &record)?;
                rel
            } else {
                let rel = format!("accel/{}.bc.json", entry.pair_id);
                write_accel_f32(&dir.join(&rel), &record)?;
                rel
            };

            manifest.push(ManifestEntry {
                pair_id: entry.pair_id.clone(),
                speaker_id: entry.speaker_id.clone(),
                ac_path: ac_rel,
                bc_path: bc_rel,
                scene: entry.scene.clone(),
                ground_truth: entry.ground_truth,
                delay_samples: entry.scene.delay_samples,
            });
        }
        let manifest_path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(&manifest_path, json)
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        Ok(manifest_path)
    }
}

/// Places the bone signal on one lateral axis of a triaxial record, with a
/// little cross-axis leakage, gravity on z, and a small sensor floor.
pub fn embed_in_accel(bc: &Waveform, condition: BcCondition, seed: u64) -> Result<AccelRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bc.len();
    let main_axis = rng.gen_range(0..2usize); // x or y
    // Physical scale: speech-induced skin vibration is a fraction of g.
    let scale = 0.6;
    let mut axes = [vec![0.0; n], vec![0.0; n], vec![9.81; n]];
    for (i, &v) in bc.samples().iter().enumerate() {
        axes[main_axis][i] = v * scale;
        axes[1 - main_axis][i] = v * scale * 0.08;
    }
    // Small independent sensor noise everywhere; slow gravity wobble when
    // the wearer moves.
    let wobble = motion_noise(n, bc.sample_rate(), condition, &mut rng);
    let wobble_gain = match condition {
        BcCondition::Still => 0.0005,
        _ => 0.01,
    };
    let wpeak = wobble.peak().max(1e-9);
    for i in 0..n {
        for axes_i in axes.iter_mut() {
            axes_i[i] += rng.gen_range(-1.0..1.0) * 2e-4;
        }
        axes[2][i] += wobble.samples()[i] / wpeak * wobble_gain * 9.81 * 0.02;
    }
    AccelRecord::new(bc.sample_rate(), axes)
}

/// Generates and writes a corpus in one call; the spec'd synth entry point.
pub fn build_corpus(params: &CorpusParams, out_dir: &Path) -> Result<PathBuf> {
    let corpus = Corpus::generate(params)?;
    corpus.write(out_dir)
}

/// Loads a manifest written by [`Corpus::write`].
pub fn read_manifest(manifest_path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads the AC/BC files behind a manifest entry and returns the raw
/// waveform + accelerometer record (not yet initialized).
pub fn load_entry_files(
    corpus_dir: &Path,
    entry: &ManifestEntry,
) -> Result<(Waveform, AccelRecord)> {
    let ac = crate::signal::wav::read_wav(&corpus_dir.join(&entry.ac_path))?;
    let bc = crate::signal::accel::read_accel(&corpus_dir.join(&entry.bc_path))?;
    Ok((ac, bc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(seed: u64) -> CorpusParams {
        CorpusParams {
            n_speakers: 3,
            utterances_per_speaker: 2,
            duration_s: 2.0,
            scene_mix: SceneMix::default(),
            seed,
            accel_format: "f32".into(),
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let params = small_params(7);
        let a = Corpus::generate(&params).unwrap();
        let b = Corpus::generate(&params).unwrap();
        assert_eq!(a.entries.len(), b.entries.len());
        for (x, y) in a.entries.iter().zip(b.entries.iter()) {
            assert_eq!(x.pair_id, y.pair_id);
            assert_eq!(x.output.pair.ac, y.output.pair.ac);
            assert_eq!(x.output.pair.bc, y.output.pair.bc);
        }
    }

    #[test]
    fn written_manifests_are_byte_identical() {
        let params = small_params(7);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = build_corpus(&params, d1.path()).unwrap();
        let m2 = build_corpus(&params, d2.path()).unwrap();
        assert_eq!(fs::read(m1).unwrap(), fs::read(m2).unwrap());
    }

    #[test]
    fn pure_genuine_mix_labels_everything_genuine() {
        let corpus = Corpus::generate(&small_params(3)).unwrap();
        assert!(corpus
            .entries
            .iter()
            .all(|e| e.ground_truth == GroundTruth::Genuine));
    }

    #[test]
    fn attack_entries_never_carry_genuine_labels() {
        let mut params = small_params(9);
        params.scene_mix = SceneMix {
            genuine: 0.0,
            false_trigger: 1.0,
            acoustic_replay: 1.0,
            crossdomain_machine: 1.0,
            ..SceneMix::default()
        };
        let corpus = Corpus::generate(&params).unwrap();
        for e in &corpus.entries {
            assert_ne!(e.ground_truth, GroundTruth::Genuine);
        }
    }

    #[test]
    fn manifest_round_trips_and_files_load() {
        let params = small_params(11);
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = build_corpus(&params, dir.path()).unwrap();
        let entries = read_manifest(&manifest_path).unwrap();
        assert_eq!(entries.len(), 6);
        let (ac, bc) = load_entry_files(dir.path(), &entries[0]).unwrap();
        assert_eq!(ac.sample_rate(), PIPELINE_RATE);
        assert_eq!(bc.sample_rate, PIPELINE_RATE);
        assert_eq!(bc.len(), 16000);
        assert!(!ac.is_empty());
    }

    #[test]
    fn rejects_single_speaker() {
        let mut params = small_params(1);
        params.n_speakers = 1;
        assert!(matches!(
            Corpus::generate(&params),
            Err(Error::TooFewSpeakers { .. })
        ));
    }
}
