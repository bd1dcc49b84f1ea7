//! Training loop: Adam over the flat parameter vector, shuffled
//! mini-batches, optional pretraining on a clean air-conduction corpus,
//! and per-epoch logging. Fixed seeds reproduce bit-identical parameters.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcsr::augment::augment;
use crate::bcsr::feature::BcFeature;
use crate::bcsr::nn::{Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::synth::subseed;

/// One labeled training sample.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub feature: BcFeature,
    pub speaker: usize,
    pub condition: usize,
}

/// Optimizer and schedule settings (Adam).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 60,
            batch_size: 64,
            augment: true,
            seed: 0,
        }
    }
}

/// Per-epoch running means of the losses and head accuracies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_speaker: f64,
    pub loss_condition: f64,
    pub speaker_accuracy: f64,
    pub condition_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Combined loss of the very first batch, before any update.
    pub first_batch_loss: f64,
    pub first_batch_loss_speaker: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], opts: &TrainOptions) {
        self.t += 1;
        let b1t = 1.0 - opts.beta1.powi(self.t as i32);
        let b2t = 1.0 - opts.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = opts.beta1 * self.m[i] + (1.0 - opts.beta1) * grad[i];
            self.v[i] = opts.beta2 * self.v[i] + (1.0 - opts.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= opts.learning_rate * mhat / (vhat.sqrt() + opts.epsilon);
        }
    }
}

/// Trains `net` in place over the samples. Batches are shuffled per epoch
/// from the seed; per-sample gradients are computed in parallel but summed
/// in index order, so results do not depend on thread count.
pub fn train_in_place(
    net: &mut Network,
    samples: &[TrainSample],
    opts: &TrainOptions,
) -> Result<TrainLog> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "empty training set".into(),
        });
    }
    let n_speakers = samples.iter().map(|s| s.speaker).max().unwrap() + 1;
    if n_speakers < 2 {
        return Err(Error::TooFewSpeakers {
            needed: 2,
            got: n_speakers,
        });
    }
    for s in samples {
        if s.speaker >= net.spec.n_speakers || s.condition >= net.spec.n_conditions {
            return Err(Error::LabelOutOfRange {
                got: s.speaker.max(s.condition),
                num_classes: net.spec.n_speakers.max(net.spec.n_conditions),
            });
        }
    }

    let mut params = net.params_flat();
    let mut adam = Adam::new(params.len());
    let mut log = TrainLog::default();
    let mut first_recorded = false;

    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(opts.seed, 0x5801 + epoch as u64));
        order.shuffle(&mut rng);

        let mut ls_sum = 0.0;
        let mut lv_sum = 0.0;
        let mut s_correct = 0usize;
        let mut v_correct = 0usize;
        let mut seen = 0usize;

        for batch in order.chunks(opts.batch_size.max(1)) {
            net.set_params_flat(&params)?;
            // Materialize (possibly augmented) inputs for this batch.
            let inputs: Vec<(Array2<f64>, usize, usize)> = batch
                .par_iter()
                .map(|&idx| {
                    let s = &samples[idx];
                    let feat = if opts.augment {
                        let aug_seed =
                            subseed(opts.seed, 0xA000_0000 + (epoch * samples.len() + idx) as u64);
                        augment(&s.feature, aug_seed).cqt.magnitudes
                    } else {
                        s.feature.cqt.magnitudes.clone()
                    };
                    (feat, s.speaker, s.condition)
                })
                .collect();

            let grads: Result<Vec<_>> = inputs
                .par_iter()
                .map(|(f, spk, cond)| net.loss_and_grad(f, *spk, *cond))
                .collect();
            let grads = grads?;

            let mut mean_grad = vec![0.0; params.len()];
            for g in &grads {
                ls_sum += g.loss_speaker;
                lv_sum += g.loss_condition;
                for (m, d) in mean_grad.iter_mut().zip(g.grad.iter()) {
                    *m += d;
                }
            }
            let inv = 1.0 / grads.len() as f64;
            for m in mean_grad.iter_mut() {
                *m *= inv;
            }
            for (g, (_, spk, cond)) in grads.iter().zip(inputs.iter()) {
                if g.speaker_pred == *spk {
                    s_correct += 1;
                }
                if g.condition_pred == *cond {
                    v_correct += 1;
                }
            }
            seen += grads.len();

            if !first_recorded {
                let ls = grads.iter().map(|g| g.loss_speaker).sum::<f64>() * inv;
                let lv = grads.iter().map(|g| g.loss_condition).sum::<f64>() * inv;
                log.first_batch_loss = ls - net.spec.lambda * lv;
                log.first_batch_loss_speaker = ls;
                first_recorded = true;
            }

            adam.step(&mut params, &mean_grad, opts);
        }

        log.epochs.push(EpochLog {
            epoch,
            loss_speaker: ls_sum / seen as f64,
            loss_condition: lv_sum / seen as f64,
            speaker_accuracy: s_correct as f64 / seen as f64,
            condition_accuracy: v_correct as f64 / seen as f64,
        });
    }
    net.set_params_flat(&params)?;
    Ok(log)
}

/// Trains a fresh network, optionally warming the trunk up on a clean
/// air-conduction corpus first (heads are re-initialized for the main
/// corpus; everything stays trainable during fine-tuning).
pub fn train(
    spec: &NetworkSpec,
    samples: &[TrainSample],
    pretrain_samples: Option<(&[TrainSample], usize)>,
    opts: &TrainOptions,
) -> Result<(Network, TrainLog)> {
    let mut net = Network::init(spec, subseed(opts.seed, 0x1217))?;

    if let Some((ac_samples, pre_epochs)) = pretrain_samples {
        let n_pre_speakers = ac_samples.iter().map(|s| s.speaker).max().unwrap_or(0) + 1;
        let pre_spec = NetworkSpec {
            n_speakers: n_pre_speakers.max(2),
            lambda: 0.0,
            ..spec.clone()
        };
        let mut pre_net = Network::init(&pre_spec, subseed(opts.seed, 0x94E))?;
        let pre_opts = TrainOptions {
            epochs: pre_epochs,
            ..opts.clone()
        };
        train_in_place(&mut pre_net, ac_samples, &pre_opts)?;
        // Keep the warmed-up trunk; the heads restart for the new label set.
        transplant_trunk(&pre_net, &mut net);
    }

    let log = train_in_place(&mut net, samples, opts)?;
    Ok((net, log))
}

/// Copies trunk tensors from `src` into `dst` (head shapes may differ).
fn transplant_trunk(src: &Network, dst: &mut Network) {
    use crate::bcsr::nn::ParamGroup;
    let src_flat = src.params_flat();
    let src_groups = src.param_groups_flat();
    let mut dst_flat = dst.params_flat();
    let dst_groups = dst.param_groups_flat();
    // Trunk tensors come first and have identical shapes in both nets.
    let mut si = 0;
    let mut di = 0;
    loop {
        while si < src_flat.len() && src_groups[si] != ParamGroup::Trunk {
            si += 1;
        }
        while di < dst_flat.len() && dst_groups[di] != ParamGroup::Trunk {
            di += 1;
        }
        if si >= src_flat.len() || di >= dst_flat.len() {
            break;
        }
        dst_flat[di] = src_flat[si];
        si += 1;
        di += 1;
    }
    dst.set_params_flat(&dst_flat).unwrap();
}
