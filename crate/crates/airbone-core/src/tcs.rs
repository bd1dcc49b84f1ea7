//! Stage I: temporal consistency scoring.
//!
//! Both signals are short-time transformed; leading/trailing silence is
//! trimmed against the bone side's per-frame power; the top-energy
//! frequency rows of each domain are selected; and the score is the
//! maximum Pearson correlation between any selected air row and any
//! selected bone row over the kept frames. Coupled vocalizations correlate
//! strongly at their representative frequencies even though the bone
//! channel is non-linear; unrelated signals do not.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ScoreSet;
use crate::signal::{pearson, stft, FrameSpec, Spectrogram, Waveform};
use crate::synth::AirBonePair;

/// Which per-bin time series feeds the correlation rows. Power always
/// drives the marginals; the rows themselves default to magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationInput {
    #[default]
    Magnitude,
    Power,
}

/// Stage-I configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcsConfig {
    /// Number of top-energy air-side frequency rows (M).
    pub top_ac_bins: usize,
    /// Number of top-energy bone-side frequency rows (N).
    pub top_bc_bins: usize,
    pub frame: FrameSpec,
    /// Fraction of the peak bone marginal power below which leading and
    /// trailing frames count as silence.
    pub silence_fraction: f64,
    /// Acceptance threshold on the consistency score.
    pub threshold: f64,
    #[serde(default)]
    pub correlation_input: CorrelationInput,
}

impl Default for TcsConfig {
    /// M = N = 5, 5 ms window with 1 ms overlap, threshold 0.4.
    fn default() -> Self {
        TcsConfig {
            top_ac_bins: 5,
            top_bc_bins: 5,
            frame: FrameSpec::default(),
            silence_fraction: 0.02,
            threshold: 0.4,
        correlation_input: CorrelationInput::Magnitude,
        }
    }
}

impl TcsConfig {
    fn validate(&self) -> Result<()> {
        if self.top_ac_bins < 1 || self.top_bc_bins < 1 {
            return Err(Error::InvalidParameter {
                name: "top bins",
                reason: "M and N must be >= 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.silence_fraction) || self.silence_fraction <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "silence_fraction",
                reason: format!("{} outside (0, 1)", self.silence_fraction),
            });
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParameter {
                name: "threshold",
                reason: format!("{} outside [0, 1]", self.threshold),
            });
        }
        Ok(())
    }
}

/// Stage-I outcome: the score, what was selected, and the full
/// correlation matrix for inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TcsResult {
    pub score: f64,
    pub selected_ac_bins: Vec<usize>,
    pub selected_bc_bins: Vec<usize>,
    /// `correlation_matrix[i][j]` correlates AC row `selected_ac_bins[i]`
    /// with BC row `selected_bc_bins[j]`.
    pub correlation_matrix: Vec<Vec<f64>>,
    pub threshold: f64,
    pub accepted: bool,
}

/// Indices of the `k` largest values, descending, ties broken by lower
/// index. Enlarging `k` always yields a superset.
fn top_k_indices(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > values.len() {
        return Err(Error::InvalidParameter {
            name: "top bins",
            reason: format!("{k} exceeds bin count {}", values.len()),
        });
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    Ok(idx)
}

/// First and last frame (inclusive) whose bone marginal power clears the
/// silence threshold.
fn active_span(bc_marginal: &[f64], silence_fraction: f64) -> Option<(usize, usize)> {
    let peak = bc_marginal.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let gate = silence_fraction * peak;
    let first = bc_marginal.iter().position(|&p| p >= gate)?;
    let last = bc_marginal.iter().rposition(|&p| p >= gate)?;
    Some((first, last))
}

struct Prepared {
    ac: Spectrogram,
    bc: Spectrogram,
    span: (usize, usize),
}

fn prepare(pair: &AirBonePair, cfg: &TcsConfig) -> Result<Prepared> {
    if pair.ac.sample_rate() != pair.bc.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: pair.ac.sample_rate(),
            right: pair.bc.sample_rate(),
        });
    }
    let rate = pair.ac.sample_rate();
    let common = pair.ac.len().min(pair.bc.len());
    if (common as f64) < rate as f64 {
        return Err(Error::SignalTooShort {
            needed: rate as usize,
            got: common,
        });
    }
    let ac = stft(&pair.ac.truncated(common), &cfg.frame)?;
    let bc = stft(&pair.bc.truncated(common), &cfg.frame)?;

    // Marginal bone power per frame gates the silence trim.
    let frames = ac.frames().min(bc.frames());
    let bc_marginal: Vec<f64> = (0..frames)
        .map(|t| (0..bc.bins()).map(|b| bc.magnitudes[[b, t]].powi(2)).sum())
        .collect();
    let span = active_span(&bc_marginal, cfg.silence_fraction).ok_or(Error::NoVoicedContent)?;
    if span.1 - span.0 + 1 < 2 {
        return Err(Error::NoVoicedContent);
    }
    Ok(Prepared { ac, bc, span })
}

/// Scores the temporal consistency of an initialized pair.
pub fn tcs_score(pair: &AirBonePair, cfg: &TcsConfig) -> Result<TcsResult> {
    cfg.validate()?;
    let prep = prepare(pair, cfg)?;
    let (lo, hi) = prep.span;

    let marginal = |s: &Spectrogram| -> Vec<f64> {
        (0..s.bins())
            .map(|b| (lo..=hi).map(|t| s.magnitudes[[b, t]].powi(2)).sum())
            .collect()
    };
    let ac_power = marginal(&prep.ac);
    let bc_power = marginal(&prep.bc);
    let selected_ac_bins = top_k_indices(&ac_power, cfg.top_ac_bins)?;
    let selected_bc_bins = top_k_indices(&bc_power, cfg.top_bc_bins)?;

    let row = |s: &Spectrogram, bin: usize| -> Vec<f64> {
        (lo..=hi)
            .map(|t| {
                let m = s.magnitudes[[bin, t]];
                match cfg.correlation_input {
                    CorrelationInput::Magnitude => m,
                    CorrelationInput::Power => m * m,
                }
            })
            .collect()
    };

    let mut correlation_matrix = Vec::with_capacity(selected_ac_bins.len());
    let mut score = f64::NEG_INFINITY;
    for &m in &selected_ac_bins {
        let ra = row(&prep.ac, m);
        let mut mrow = Vec::with_capacity(selected_bc_bins.len());
        for &n in &selected_bc_bins {
            let rb = row(&prep.bc, n);
            let r = pearson(&ra, &rb)?;
            score = score.max(r);
            mrow.push(r);
        }
        correlation_matrix.push(mrow);
    }

    Ok(TcsResult {
        score,
        selected_ac_bins,
        selected_bc_bins,
        correlation_matrix,
        threshold: cfg.threshold,
        accepted: score > cfg.threshold,
    })
}

/// Candidate axes for [`tcs_grid_search`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TcsGrid {
    pub top_ac_bins: Vec<usize>,
    pub top_bc_bins: Vec<usize>,
    pub window_ms: Vec<f64>,
}

/// Picks the candidate configuration minimizing dev-set EER. Ties go to
/// the smaller M+N, then the smaller window.
pub fn tcs_grid_search(
    dev_pairs: &[(AirBonePair, bool)],
    base: &TcsConfig,
    grid: &TcsGrid,
) -> Result<TcsConfig> {
    if grid.top_ac_bins.is_empty() || grid.top_bc_bins.is_empty() || grid.window_ms.is_empty() {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "empty candidate axis".into(),
        });
    }
    let n_genuine = dev_pairs.iter().filter(|(_, g)| *g).count();
    if n_genuine == 0 || n_genuine == dev_pairs.len() {
        return Err(Error::SingleClassScores);
    }

    let mut best: Option<(f64, usize, f64, TcsConfig)> = None;
    for &w in &grid.window_ms {
        for &m in &grid.top_ac_bins {
            for &n in &grid.top_bc_bins {
                let overlap = (base.frame.window_ms - base.frame.hop_ms).max(0.0);
                let cfg = TcsConfig {
                    top_ac_bins: m,
                    top_bc_bins: n,
                    frame: FrameSpec::with_overlap(w, overlap.min(w / 2.0), base.frame.window_function),
                    ..base.clone()
                };
                let mut genuine = Vec::new();
                let mut impostor = Vec::new();
                for (pair, is_genuine) in dev_pairs {
                    let s = tcs_score(pair, &cfg)?.score;
                    if *is_genuine {
                        genuine.push(s);
                    } else {
                        impostor.push(s);
                    }
                }
                let (eer, _) = crate::eval::compute_eer(&ScoreSet::new(
                    genuine,
                    impostor,
                    format!("grid m{m} n{n} w{w}"),
                )?)?;
                let key = (eer, m + n, w);
                let better = match &best {
                    None => true,
                    Some((beer, bmn, bw, _)) => {
                        (key.0, key.1, key.2) < (*beer, *bmn, *bw)
                    }
                };
                if better {
                    best = Some((eer, m + n, w, cfg));
                }
            }
        }
    }
    Ok(best.unwrap().3)
}

/// Convenience: initialized pair straight from two waveforms (used by
/// tests and batch protocols on in-memory corpora).
pub fn pair_from_waveforms(ac: Waveform, bc: Waveform) -> Result<AirBonePair> {
    AirBonePair::unlabeled(ac, bc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::render::render_pair_detailed;
    use crate::synth::{synth_utterance, AttackKind, SceneSpec, VocalModel};

    fn genuine_pair(seed: u64) -> AirBonePair {
        let m = VocalModel::bank(4, 31)[1].clone();
        let clear = synth_utterance(&m, 4.0, seed).unwrap();
        render_pair_detailed(&clear, &m, &SceneSpec::default(), seed)
            .unwrap()
            .pair
    }

    fn false_trigger_pair(seed: u64) -> AirBonePair {
        let m = VocalModel::bank(4, 31)[1].clone();
        let clear = synth_utterance(&m, 4.0, seed).unwrap();
        let scene = SceneSpec {
            attack: AttackKind::FalseTrigger,
            ..SceneSpec::default()
        };
        render_pair_detailed(&clear, &m, &scene, seed).unwrap().pair
    }

    #[test]
    fn self_pair_scores_one() {
        let m = VocalModel::bank(2, 9)[0].clone();
        let w = synth_utterance(&m, 2.0, 3).unwrap();
        let pair = AirBonePair::unlabeled(w.clone(), w).unwrap();
        let r = tcs_score(&pair, &TcsConfig::default()).unwrap();
        assert!((r.score - 1.0).abs() < 1e-12);
        assert!(r.accepted);
    }

    #[test]
    fn genuine_scores_high_false_trigger_low() {
        let cfg = TcsConfig::default();
        let g = tcs_score(&genuine_pair(5), &cfg).unwrap();
        let f = tcs_score(&false_trigger_pair(5), &cfg).unwrap();
        assert!(g.score > 0.6, "genuine score {}", g.score);
        assert!(f.score < g.score);
    }

    #[test]
    fn false_triggers_mostly_rejected_at_default_threshold() {
        let cfg = TcsConfig::default();
        let trials = 200;
        let mut rejected = 0;
        for seed in 0..trials {
            let r = tcs_score(&false_trigger_pair(seed), &cfg).unwrap();
            if r.score < 0.4 {
                rejected += 1;
            }
        }
        assert!(
            rejected as f64 >= 0.95 * trials as f64,
            "only {rejected}/{trials} rejected"
        );
    }

    #[test]
    fn scale_invariance() {
        let pair = genuine_pair(8);
        let cfg = TcsConfig::default();
        let base = tcs_score(&pair, &cfg).unwrap().score;
        let scaled = AirBonePair::unlabeled(pair.ac.scaled(3.7), pair.bc.scaled(0.02)).unwrap();
        let s = tcs_score(&scaled, &cfg).unwrap().score;
        assert!((s - base).abs() < 1e-9, "{s} vs {base}");
    }

    #[test]
    fn monotone_in_selection_size() {
        let pair = genuine_pair(10);
        let mut cfg = TcsConfig::default();
        let mut prev = f64::NEG_INFINITY;
        for k in [1, 3, 5, 9] {
            cfg.top_ac_bins = k;
            cfg.top_bc_bins = k;
            let s = tcs_score(&pair, &cfg).unwrap().score;
            assert!(s + 1e-12 >= prev, "score dropped from {prev} to {s} at k={k}");
            prev = s;
        }
    }

    #[test]
    fn appended_silence_leaves_score_unchanged() {
        let pair = genuine_pair(12);
        let cfg = TcsConfig::default();
        let base = tcs_score(&pair, &cfg).unwrap().score;
        let pad = vec![0.0; 8000];
        let extend = |w: &Waveform| {
            let mut s = w.samples().to_vec();
            s.extend_from_slice(&pad);
            Waveform::new(s, w.sample_rate()).unwrap()
        };
        let padded = AirBonePair::unlabeled(extend(&pair.ac), extend(&pair.bc)).unwrap();
        let s = tcs_score(&padded, &cfg).unwrap().score;
        assert!((s - base).abs() < 1e-9, "{s} vs {base}");
    }

    #[test]
    fn all_silence_is_an_explicit_error() {
        let quiet = Waveform::zeros(16000, 8000);
        let pair = AirBonePair::unlabeled(quiet.clone(), quiet).unwrap();
        assert!(matches!(
            tcs_score(&pair, &TcsConfig::default()),
            Err(Error::NoVoicedContent)
        ));
    }

    #[test]
    fn short_pair_is_rejected() {
        let w = Waveform::zeros(4000, 8000);
        let pair = AirBonePair::unlabeled(w.clone(), w).unwrap();
        assert!(matches!(
            tcs_score(&pair, &TcsConfig::default()),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn grid_search_returns_the_best_candidate() {
        let mut dev = Vec::new();
        for seed in 0..6 {
            dev.push((genuine_pair(seed), true));
            dev.push((false_trigger_pair(seed + 100), false));
        }
        let grid = TcsGrid {
            top_ac_bins: vec![5],
            top_bc_bins: vec![5],
            window_ms: vec![5.0],
        };
        let cfg = tcs_grid_search(&dev, &TcsConfig::default(), &grid).unwrap();
        assert_eq!(cfg.top_ac_bins, 5);
        assert_eq!((cfg.frame.window_ms * 10.0).round() as i64, 50);
    }

    #[test]
    fn grid_search_tie_breaks_toward_smaller_selection() {
        // Perfectly separable dev set: every candidate reaches EER 0, so
        // the tie-break picks the smallest M+N and window.
        let mut dev = Vec::new();
        for seed in 0..3 {
            dev.push((genuine_pair(seed), true));
            dev.push((false_trigger_pair(seed + 50), false));
        }
        let grid = TcsGrid {
            top_ac_bins: vec![3, 5],
            top_bc_bins: vec![3, 5],
            window_ms: vec![5.0, 8.0],
        };
        let cfg = tcs_grid_search(&dev, &TcsConfig::default(), &grid).unwrap();
        assert_eq!(cfg.top_ac_bins + cfg.top_bc_bins, 6);
        assert_eq!((cfg.frame.window_ms * 10.0).round() as i64, 50);
    }

    #[test]
    fn grid_search_rejects_single_class() {
        let dev = vec![(genuine_pair(1), true)];
        let grid = TcsGrid {
            top_ac_bins: vec![5],
            top_bc_bins: vec![5],
            window_ms: vec![5.0],
        };
        assert!(matches!(
            tcs_grid_search(&dev, &TcsConfig::default(), &grid),
            Err(Error::SingleClassScores)
        ));
    }
}
