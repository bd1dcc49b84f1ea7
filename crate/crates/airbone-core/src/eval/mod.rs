//! Metrics and experiment protocols: EER/FAR/FRR, ROC curves, and the
//! batteries that exercise the two-stage pipeline end to end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// protocols module added below

/// Genuine and impostor score samples for one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine_scores: Vec<f64>,
    pub impostor_scores: Vec<f64>,
    pub label: String,
}

impl ScoreSet {
    pub fn new(
        genuine_scores: Vec<f64>,
        impostor_scores: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if genuine_scores.is_empty() || impostor_scores.is_empty() {
            return Err(Error::SingleClassScores);
        }
        if genuine_scores
            .iter()
            .chain(impostor_scores.iter())
            .any(|s| !s.is_finite())
        {
            return Err(Error::NonFiniteSample(0));
        }
        Ok(ScoreSet {
            genuine_scores,
            impostor_scores,
            label: label.into(),
        })
    }
}

/// One operating point under accept-if-score-≥-threshold semantics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// (FAR, FRR) at one threshold, counting accepts as score >= t.
fn rates_at(s: &ScoreSet, t: f64) -> (f64, f64) {
    let fa = s.impostor_scores.iter().filter(|&&v| v >= t).count() as f64
        / s.impostor_scores.len() as f64;
    let fr = s.genuine_scores.iter().filter(|&&v| v < t).count() as f64
        / s.genuine_scores.len() as f64;
    (fa, fr)
}

/// Candidate thresholds: every distinct score plus one sentinel beyond the
/// maximum (where FAR = 0, FRR = 1).
fn candidate_thresholds(s: &ScoreSet) -> Vec<f64> {
    let mut ts: Vec<f64> = s
        .genuine_scores
        .iter()
        .chain(s.impostor_scores.iter())
        .copied()
        .collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let last = *ts.last().unwrap();
    ts.push(last + 1.0 + last.abs() * 1e-9);
    ts
}

/// Equal error rate and the threshold where FAR crosses FRR.
///
/// The sweep visits every distinct score; between adjacent sweep points the
/// crossing is linearly interpolated. The interpolation runs on the
/// (FAR, FRR) values themselves, so the EER is invariant under strictly
/// increasing transforms of the scores.
pub fn compute_eer(s: &ScoreSet) -> Result<(f64, f64)> {
    if s.genuine_scores.is_empty() || s.impostor_scores.is_empty() {
        return Err(Error::SingleClassScores);
    }
    let ts = candidate_thresholds(s);
    let mut prev_t = ts[0];
    let (mut prev_far, mut prev_frr) = rates_at(s, prev_t);
    if prev_far <= prev_frr {
        // Already crossed at the lowest threshold.
        return Ok(((prev_far + prev_frr) / 2.0, prev_t));
    }
    for &t in &ts[1..] {
        let (far, frr) = rates_at(s, t);
        if far <= frr {
            // Crossing sits between prev_t and t.
            let d_prev = prev_far - prev_frr; // > 0
            let d_cur = far - frr; // <= 0
            let alpha = if (d_prev - d_cur).abs() < 1e-300 {
                0.0
            } else {
                d_prev / (d_prev - d_cur)
            };
            let eer = prev_far + alpha * (far - prev_far);
            let threshold = prev_t + alpha * (t - prev_t);
            return Ok((eer, threshold));
        }
        prev_t = t;
        prev_far = far;
        prev_frr = frr;
    }
    // FAR stays above FRR everywhere; the sentinel guarantees we never
    // get here, but fall back to the last point for safety.
    Ok(((prev_far + prev_frr) / 2.0, prev_t))
}

/// ROC curve with at most `n_points` interior thresholds plus forced
/// endpoints at FAR = 1 and FAR = 0. FAR is non-increasing and FRR
/// non-decreasing along the returned curve.
pub fn roc_curve(s: &ScoreSet, n_points: usize) -> Result<Vec<RocPoint>> {
    if s.genuine_scores.is_empty() || s.impostor_scores.is_empty() {
        return Err(Error::SingleClassScores);
    }
    let ts = candidate_thresholds(s);
    let lowest = ts[0] - 1.0 - ts[0].abs() * 1e-9;
    let mut sweep = vec![lowest];
    if ts.len() <= n_points.max(2) {
        sweep.extend_from_slice(&ts);
    } else {
        let step = ts.len() as f64 / n_points.max(2) as f64;
        let mut idx = 0.0;
        while (idx as usize) < ts.len() {
            sweep.push(ts[idx as usize]);
            idx += step;
        }
        let last = *ts.last().unwrap();
        if *sweep.last().unwrap() < last {
            sweep.push(last);
        }
    }
    Ok(sweep
        .into_iter()
        .map(|t| {
            let (far, frr) = rates_at(s, t);
            RocPoint {
                threshold: t,
                far,
                frr,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation_has_zero_eer() {
        let s = ScoreSet::new(vec![1.0; 5], vec![0.0; 5], "t").unwrap();
        let (eer, thr) = compute_eer(&s).unwrap();
        assert!(eer.abs() < 1e-12);
        assert!(thr > 0.0 && thr <= 1.0);
    }

    #[test]
    fn identical_distributions_have_half_eer() {
        let scores = vec![0.3, 0.5, 0.9, 0.1];
        let s = ScoreSet::new(scores.clone(), scores, "t").unwrap();
        let (eer, _) = compute_eer(&s).unwrap();
        assert!((eer - 0.5).abs() < 1e-9, "eer {eer}");
    }

    #[test]
    fn matches_brute_force_on_small_set() {
        let s = ScoreSet::new(vec![0.9, 0.8, 0.4], vec![0.5, 0.3, 0.1], "t").unwrap();
        let (eer, _) = compute_eer(&s).unwrap();
        // Exhaustive check over every candidate threshold with the same
        // interpolation convention.
        let brute = brute_force_eer(&s);
        assert!((eer - brute).abs() < 1e-9, "{eer} vs {brute}");
    }

    /// Independent O(n²) oracle: recompute FAR/FRR by counting at every
    /// candidate, find the sign change, interpolate linearly.
    pub fn brute_force_eer(s: &ScoreSet) -> f64 {
        let mut ts: Vec<f64> = s
            .genuine_scores
            .iter()
            .chain(s.impostor_scores.iter())
            .copied()
            .collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup();
        ts.push(ts.last().unwrap() + 1.0 + ts.last().unwrap().abs() * 1e-9);
        let rates = |t: f64| {
            let fa = s.impostor_scores.iter().filter(|&&v| v >= t).count() as f64
                / s.impostor_scores.len() as f64;
            let fr = s.genuine_scores.iter().filter(|&&v| v < t).count() as f64
                / s.genuine_scores.len() as f64;
            (fa, fr)
        };
        let (f0, r0) = rates(ts[0]);
        if f0 <= r0 {
            return (f0 + r0) / 2.0;
        }
        for w in ts.windows(2) {
            let (fa1, fr1) = rates(w[0]);
            let (fa2, fr2) = rates(w[1]);
            if fa2 <= fr2 {
                let d1 = fa1 - fr1;
                let d2 = fa2 - fr2;
                let alpha = if (d1 - d2).abs() < 1e-300 {
                    0.0
                } else {
                    d1 / (d1 - d2)
                };
                return fa1 + alpha * (fa2 - fa1);
            }
        }
        unreachable!("sentinel guarantees a crossing");
    }

    #[test]
    fn roc_hits_both_corners() {
        let s = ScoreSet::new(vec![0.9, 0.7], vec![0.2, 0.4], "t").unwrap();
        let roc = roc_curve(&s, 16).unwrap();
        assert!((roc.first().unwrap().far - 1.0).abs() < 1e-12);
        assert!((roc.first().unwrap().frr).abs() < 1e-12);
        assert!((roc.last().unwrap().far).abs() < 1e-12);
        assert!((roc.last().unwrap().frr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roc_is_monotone() {
        let genuine: Vec<f64> = (0..50).map(|i| 0.4 + 0.01 * i as f64).collect();
        let impostor: Vec<f64> = (0..50).map(|i| 0.01 * i as f64).collect();
        let s = ScoreSet::new(genuine, impostor, "t").unwrap();
        let roc = roc_curve(&s, 20).unwrap();
        for w in roc.windows(2) {
            assert!(w[1].far <= w[0].far + 1e-12);
            assert!(w[1].frr + 1e-12 >= w[0].frr);
        }
    }

    #[test]
    fn eer_can_be_read_off_the_roc() {
        let genuine: Vec<f64> = (0..200).map(|i| 0.3 + 0.003 * i as f64).collect();
        let impostor: Vec<f64> = (0..200).map(|i| 0.002 * i as f64).collect();
        let s = ScoreSet::new(genuine, impostor, "t").unwrap();
        let (eer, _) = compute_eer(&s).unwrap();
        // Full-resolution curve: locate the FAR/FRR crossing.
        let roc = roc_curve(&s, usize::MAX).unwrap();
        let mut roc_eer = None;
        for w in roc.windows(2) {
            let d1 = w[0].far - w[0].frr;
            let d2 = w[1].far - w[1].frr;
            if d1 > 0.0 && d2 <= 0.0 {
                let alpha = d1 / (d1 - d2);
                roc_eer = Some(w[0].far + alpha * (w[1].far - w[0].far));
                break;
            }
        }
        let roc_eer = roc_eer.expect("crossing on curve");
        assert!((roc_eer - eer).abs() < 1e-3, "{roc_eer} vs {eer}");
    }

    #[test]
    fn rejects_single_class() {
        assert!(ScoreSet::new(vec![], vec![0.1], "t").is_err());
        assert!(ScoreSet::new(vec![0.1], vec![], "t").is_err());
    }
}
