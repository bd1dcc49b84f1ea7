//! Constant-Q input features for the recognition network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{cqt, Spectrogram, Waveform};
use crate::synth::BcCondition;

/// Feature extraction settings: 48 bins/octave below 2 kHz on an 8-second
/// segment, 10 ms hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub bins_per_octave: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub hop_s: f64,
    pub segment_s: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            bins_per_octave: 48,
            f_min: 32.7,
            f_max: 2000.0,
            hop_s: 0.010,
            segment_s: 8.0,
        }
    }
}

impl FeatureConfig {
    pub fn bins(&self) -> usize {
        (self.bins_per_octave as f64 * (self.f_max / self.f_min).log2() + 1e-9).floor() as usize
            + 1
    }

    pub fn frames(&self, sample_rate: u32) -> usize {
        let n = (self.segment_s * sample_rate as f64).round() as usize;
        let hop = (self.hop_s * sample_rate as f64).round().max(1.0) as usize;
        (n - 1) / hop + 1
    }
}

/// One network input: the CQT of an 8-second bone-conduction segment plus
/// its labels.
#[derive(Debug, Clone)]
pub struct BcFeature {
    pub cqt: Spectrogram,
    pub condition_label: BcCondition,
    pub speaker_label: Option<String>,
}

impl BcFeature {
    pub fn bins(&self) -> usize {
        self.cqt.bins()
    }

    pub fn frames(&self) -> usize {
        self.cqt.frames()
    }
}

/// Extracts the fixed-shape CQT feature from a bone-conduction waveform.
/// Inputs longer than the segment are center-cropped; shorter ones are
/// rejected.
pub fn extract_feature(
    bc: &Waveform,
    condition: BcCondition,
    cfg: &FeatureConfig,
) -> Result<BcFeature> {
    let needed = (cfg.segment_s * bc.sample_rate() as f64).round() as usize;
    if bc.len() < needed {
        return Err(Error::SignalTooShort {
            needed,
            got: bc.len(),
        });
    }
    let start = (bc.len() - needed) / 2;
    let segment = bc.segment(start, needed);
    let spec = cqt(
        &segment,
        cfg.bins_per_octave,
        cfg.f_min,
        cfg.f_max,
        cfg.hop_s,
    )?;
    Ok(BcFeature {
        cqt: spec,
        condition_label: condition,
        speaker_label: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_maps_to_all_zero_feature() {
        let w = Waveform::zeros(64000, 8000);
        let f = extract_feature(&w, BcCondition::Still, &FeatureConfig::default()).unwrap();
        assert!(f.cqt.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn longer_input_equals_its_center_crop() {
        let cfg = FeatureConfig::default();
        let mut samples = vec![0.0; 96000]; // 12 s
        for (i, v) in samples.iter_mut().enumerate() {
            *v = (2.0 * std::f64::consts::PI * 300.0 * i as f64 / 8000.0).sin()
                * (1.0 + (i as f64 / 9000.0).sin());
        }
        let long = Waveform::new(samples.clone(), 8000).unwrap();
        let crop = Waveform::new(samples[16000..80000].to_vec(), 8000).unwrap();
        let fa = extract_feature(&long, BcCondition::Still, &cfg).unwrap();
        let fb = extract_feature(&crop, BcCondition::Still, &cfg).unwrap();
        assert_eq!(fa.cqt.magnitudes, fb.cqt.magnitudes);
    }

    #[test]
    fn tone_lands_in_the_right_cqt_bin() {
        let cfg = FeatureConfig::default();
        let samples: Vec<f64> = (0..64000)
            .map(|i| (2.0 * std::f64::consts::PI * 500.0 * i as f64 / 8000.0).sin())
            .collect();
        let w = Waveform::new(samples, 8000).unwrap();
        let f = extract_feature(&w, BcCondition::Still, &cfg).unwrap();
        let totals: Vec<f64> = (0..f.bins())
            .map(|b| (0..f.frames()).map(|t| f.cqt.magnitudes[[b, t]]).sum())
            .collect();
        let peak = totals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let ratio = 2f64.powf(1.0 / (2.0 * cfg.bins_per_octave as f64));
        let got = f.cqt.bin_frequencies[peak];
        assert!(
            got / 500.0 < ratio && 500.0 / got < ratio,
            "peak bin at {got} Hz, want 500 Hz within half a bin"
        );
    }

    #[test]
    fn shape_is_fixed_for_fixed_config() {
        let cfg = FeatureConfig::default();
        let a = extract_feature(
            &Waveform::zeros(64000, 8000),
            BcCondition::Still,
            &cfg,
        )
        .unwrap();
        let b = extract_feature(
            &Waveform::zeros(72000, 8000),
            BcCondition::Moving,
            &cfg,
        )
        .unwrap();
        assert_eq!((a.bins(), a.frames()), (b.bins(), b.frames()));
        assert_eq!(a.bins(), cfg.bins());
        assert_eq!(a.frames(), cfg.frames(8000));
    }

    #[test]
    fn too_short_input_is_rejected() {
        let w = Waveform::zeros(32000, 8000);
        assert!(matches!(
            extract_feature(&w, BcCondition::Still, &FeatureConfig::default()),
            Err(Error::SignalTooShort { .. })
        ));
    }
}
