//! Machine-vibration detection on embedding vectors: a regularized linear
//! discriminant (primary) and a logistic-regression alternative.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bcsr::recognize::{LayerTag, SpeakerEmbedding};
use crate::error::{Error, Result};
use crate::synth::subseed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    LinearDiscriminant,
    Logistic,
}

/// Linear decision rule over embeddings: machine iff w·x + b > 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MachineDetector {
    pub kind: DetectorKind,
    pub layer_tag: LayerTag,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl MachineDetector {
    pub fn score(&self, e: &SpeakerEmbedding) -> Result<f64> {
        if e.layer_tag != self.layer_tag {
            return Err(Error::LayerTagMismatch {
                left: e.layer_tag.as_str().to_string(),
                right: self.layer_tag.as_str().to_string(),
            });
        }
        if e.vector.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                left: e.vector.len(),
                right: self.weights.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&e.vector)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias)
    }

    pub fn is_machine(&self, e: &SpeakerEmbedding) -> Result<bool> {
        Ok(self.score(e)? > 0.0)
    }
}

/// Cholesky solve of (A)x = b for symmetric positive-definite A (in place
/// on a copy).
fn spd_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "covariance",
                        reason: "not positive definite".into(),
                    });
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    // Forward then back substitution.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Ok(x)
}

fn mean_vec(xs: &[&SpeakerEmbedding]) -> Vec<f64> {
    let d = xs[0].vector.len();
    let mut m = vec![0.0; d];
    for x in xs {
        for (mi, v) in m.iter_mut().zip(&x.vector) {
            *mi += v;
        }
    }
    let inv = 1.0 / xs.len() as f64;
    for mi in m.iter_mut() {
        *mi *= inv;
    }
    m
}

/// Fisher discriminant with shrinkage regularization proportional to the
/// average variance, so retraining on globally rescaled embeddings yields
/// the same decisions.
pub fn train_lda(
    human: &[&SpeakerEmbedding],
    machine: &[&SpeakerEmbedding],
) -> Result<MachineDetector> {
    if human.is_empty() || machine.is_empty() {
        return Err(Error::SingleClassScores);
    }
    let tag = human[0].layer_tag;
    let d = human[0].vector.len();
    let mu_h = mean_vec(human);
    let mu_m = mean_vec(machine);

    // Pooled covariance.
    let mut cov = vec![vec![0.0; d]; d];
    let mut push = |xs: &[&SpeakerEmbedding], mu: &[f64]| {
        for x in xs {
            for i in 0..d {
                let di = x.vector[i] - mu[i];
                for j in 0..=i {
                    cov[i][j] += di * (x.vector[j] - mu[j]);
                }
            }
        }
    };
    push(human, &mu_h);
    push(machine, &mu_m);
    let denom = (human.len() + machine.len()).saturating_sub(2).max(1) as f64;
    let mut trace = 0.0;
    for i in 0..d {
        for j in 0..=i {
            cov[i][j] /= denom;
            if i != j {
                cov[j][i] = cov[i][j];
            }
        }
        trace += cov[i][i];
    }
    // Scale-adaptive ridge keeps the system solvable with few samples.
    let ridge = (trace / d as f64).max(1e-12) * 1e-2;
    for (i, row) in cov.iter_mut().enumerate() {
        row[i] += ridge;
    }

    let diff: Vec<f64> = mu_m.iter().zip(&mu_h).map(|(m, h)| m - h).collect();
    let weights = spd_solve(&cov, &diff)?;
    let mid: f64 = weights
        .iter()
        .zip(mu_m.iter().zip(&mu_h))
        .map(|(w, (m, h))| w * (m + h) / 2.0)
        .sum();
    Ok(MachineDetector {
        kind: DetectorKind::LinearDiscriminant,
        layer_tag: tag,
        weights,
        bias: -mid,
    })
}

/// Plain logistic regression with feature standardization folded back into
/// the returned linear weights. Deterministic, full-batch gradient descent.
pub fn train_logistic(
    human: &[&SpeakerEmbedding],
    machine: &[&SpeakerEmbedding],
) -> Result<MachineDetector> {
    if human.is_empty() || machine.is_empty() {
        return Err(Error::SingleClassScores);
    }
    let tag = human[0].layer_tag;
    let d = human[0].vector.len();
    let all: Vec<(&SpeakerEmbedding, f64)> = human
        .iter()
        .map(|e| (*e, 0.0))
        .chain(machine.iter().map(|e| (*e, 1.0)))
        .collect();

    // Standardize per dimension.
    let mut mean = vec![0.0; d];
    for (e, _) in &all {
        for (m, v) in mean.iter_mut().zip(&e.vector) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= all.len() as f64;
    }
    let mut std = vec![0.0; d];
    for (e, _) in &all {
        for (s, (v, m)) in std.iter_mut().zip(e.vector.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    for s in std.iter_mut() {
        *s = (*s / all.len() as f64).sqrt().max(1e-9);
    }

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let lr = 0.5;
    for _ in 0..400 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (e, y) in &all {
            let z: f64 = w
                .iter()
                .zip(e.vector.iter().zip(mean.iter().zip(&std)))
                .map(|(wi, (v, (m, s)))| wi * (v - m) / s)
                .sum::<f64>()
                + b;
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - y;
            for (g, (v, (m, s))) in gw.iter_mut().zip(e.vector.iter().zip(mean.iter().zip(&std))) {
                *g += err * (v - m) / s;
            }
            gb += err;
        }
        let inv = 1.0 / all.len() as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * (g * inv + 1e-4 * *wi);
        }
        b -= lr * gb * inv;
    }

    // Fold standardization into the weights: w·(x−m)/s + b.
    let weights: Vec<f64> = w.iter().zip(&std).map(|(wi, s)| wi / s).collect();
    let bias = b - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(MachineDetector {
        kind: DetectorKind::Logistic,
        layer_tag: tag,
        weights,
        bias,
    })
}

/// Held-out accuracies of both detector kinds on a stratified split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub lda_accuracy: f64,
    pub logistic_accuracy: f64,
    pub train_count: usize,
    pub test_count: usize,
}

/// Fits both detectors on a seeded stratified half of the data and
/// reports held-out accuracy on the rest. Returns (LDA detector,
/// logistic detector, report).
pub fn detect_machine(
    human: &[SpeakerEmbedding],
    machine: &[SpeakerEmbedding],
    seed: u64,
) -> Result<(MachineDetector, MachineDetector, DetectionReport)> {
    if human.is_empty() || machine.is_empty() {
        return Err(Error::SingleClassScores);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, 0xDE7EC7));
    let split = |xs: &[SpeakerEmbedding], rng: &mut ChaCha8Rng| -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.shuffle(rng);
        let cut = (xs.len() / 2).max(1);
        (idx[..cut].to_vec(), idx[cut..].to_vec())
    };
    let (h_train, h_test) = split(human, &mut rng);
    let (m_train, m_test) = split(machine, &mut rng);
    if h_test.is_empty() || m_test.is_empty() {
        return Err(Error::InvalidParameter {
            name: "embeddings",
            reason: "need at least two samples per class for a held-out split".into(),
        });
    }

    let ht: Vec<&SpeakerEmbedding> = h_train.iter().map(|&i| &human[i]).collect();
    let mt: Vec<&SpeakerEmbedding> = m_train.iter().map(|&i| &machine[i]).collect();
    let lda = train_lda(&ht, &mt)?;
    let logistic = train_logistic(&ht, &mt)?;

    let accuracy = |det: &MachineDetector| -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for &i in &h_test {
            if !det.is_machine(&human[i])? {
                correct += 1;
            }
            total += 1;
        }
        for &i in &m_test {
            if det.is_machine(&machine[i])? {
                correct += 1;
            }
            total += 1;
        }
        Ok(correct as f64 / total as f64)
    };
    let report = DetectionReport {
        lda_accuracy: accuracy(&lda)?,
        logistic_accuracy: accuracy(&logistic)?,
        train_count: ht.len() + mt.len(),
        test_count: h_test.len() + m_test.len(),
    };
    Ok((lda, logistic, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(center: &[f64], n: usize, spread: f64, seed: u64) -> Vec<SpeakerEmbedding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| SpeakerEmbedding {
                vector: center
                    .iter()
                    .map(|c| c + rng.gen_range(-spread..spread))
                    .collect(),
                layer_tag: LayerTag::Layer1,
            })
            .collect()
    }

    #[test]
    fn separable_clusters_reach_full_accuracy() {
        let human = cluster(&[1.0, 0.0, 0.5, -0.2], 24, 0.1, 1);
        let machine = cluster(&[-1.0, 0.8, -0.5, 0.6], 24, 0.1, 2);
        let (_, _, report) = detect_machine(&human, &machine, 7).unwrap();
        assert_eq!(report.lda_accuracy, 1.0);
        assert_eq!(report.logistic_accuracy, 1.0);
    }

    #[test]
    fn lda_decisions_survive_global_rescaling() {
        let human = cluster(&[0.6, -0.1, 0.3, 0.2], 0x20, 0.25, 3);
        let machine = cluster(&[-0.4, 0.5, -0.2, -0.3], 0x20, 0.25, 4);
        let ht: Vec<&SpeakerEmbedding> = human.iter().collect();
        let mt: Vec<&SpeakerEmbedding> = machine.iter().collect();
        let det = train_lda(&ht, &mt).unwrap();

        let scale = |xs: &[SpeakerEmbedding]| -> Vec<SpeakerEmbedding> {
            xs.iter()
                .map(|e| SpeakerEmbedding {
                    vector: e.vector.iter().map(|v| v * 2.0).collect(),
                    layer_tag: e.layer_tag,
                })
                .collect()
        };
        let human2 = scale(&human);
        let machine2 = scale(&machine);
        let ht2: Vec<&SpeakerEmbedding> = human2.iter().collect();
        let mt2: Vec<&SpeakerEmbedding> = machine2.iter().collect();
        let det2 = train_lda(&ht2, &mt2).unwrap();

        for (orig, scaled) in human.iter().zip(&human2).chain(machine.iter().zip(&machine2)) {
            assert_eq!(
                det.is_machine(orig).unwrap(),
                det2.is_machine(scaled).unwrap()
            );
        }
    }

    #[test]
    fn rejects_single_class() {
        let human = cluster(&[0.0, 0.0], 4, 0.1, 5);
        assert!(matches!(
            detect_machine(&human, &[], 1),
            Err(Error::SingleClassScores)
        ));
    }

    #[test]
    fn detector_rejects_mismatched_tag() {
        let human = cluster(&[1.0, 0.0], 8, 0.1, 6);
        let machine = cluster(&[-1.0, 0.0], 8, 0.1, 7);
        let (lda, _, _) = detect_machine(&human, &machine, 2).unwrap();
        let other = SpeakerEmbedding {
            vector: vec![0.0, 0.0],
            layer_tag: LayerTag::Layer2,
        };
        assert!(lda.score(&other).is_err());
    }
}
