//! The recognition network and its training math, written out explicitly:
//! a small residual convolutional trunk, a speaker head, and a condition
//! head behind a gradient-reversal boundary.
//!
//! Convolutions run as im2col + matrix multiplication in f64. Gradients
//! are exact analytic backprop; the finite-difference suite in the tests
//! holds every parameter to it.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture description; the parameter tensors live in [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Frequency-bin count of the expected input (informational).
    pub input_bins: usize,
    pub n_speakers: usize,
    pub n_conditions: usize,
    /// Weight of the adversarial condition loss.
    pub lambda: f64,
    /// Channel widths of the three residual blocks.
    pub channels: [usize; 3],
    /// Speaker-head hidden width (the embedding layer).
    pub embed_width: usize,
    /// Condition-head hidden width.
    pub cond_hidden: usize,
}

impl NetworkSpec {
    pub fn new(n_speakers: usize, n_conditions: usize, lambda: f64) -> Self {
        NetworkSpec {
            input_bins: 285,
            n_speakers,
            n_conditions,
            lambda,
            channels: [16, 32, 64],
            embed_width: 512,
            cond_hidden: 128,
        }
    }

    /// Tiny variant for gradient checks and fast tests.
    pub fn toy(n_speakers: usize, n_conditions: usize, lambda: f64) -> Self {
        NetworkSpec {
            input_bins: 17,
            n_speakers,
            n_conditions,
            lambda,
            channels: [2, 3, 4],
            embed_width: 8,
            cond_hidden: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_speakers < 2 {
            return Err(Error::TooFewSpeakers {
                needed: 2,
                got: self.n_speakers,
            });
        }
        if self.n_conditions < 1 || self.lambda < 0.0 {
            return Err(Error::InvalidParameter {
                name: "network spec",
                reason: "need n_conditions >= 1 and lambda >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Which parameter family a tensor belongs to; decides both the gradient
/// semantics at the reversal boundary and what the finite-difference
/// oracle differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Feature extractor (w_f).
    Trunk,
    /// Speaker head (w_s).
    SpeakerHead,
    /// Condition head (w_v).
    ConditionHead,
}

// ---------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct Conv2d {
    pub weight: Array4<f64>, // [out_c, in_c, kh, kw]
    pub bias: Array1<f64>,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

fn out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

impl Conv2d {
    fn new(
        in_c: usize,
        out_c: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = (in_c * kernel.0 * kernel.1) as f64;
        let std = (2.0 / fan_in).sqrt();
        let dist = rand_distr::Normal::new(0.0, std).unwrap();
        let weight = Array4::from_shape_fn((out_c, in_c, kernel.0, kernel.1), |_| {
            dist.sample(rng)
        });
        Conv2d {
            weight,
            bias: Array1::zeros(out_c),
            stride,
            pad,
        }
    }

    fn out_shape(&self, x: &Array3<f64>) -> (usize, usize, usize) {
        let (_, kh, kw) = (
            self.weight.shape()[1],
            self.weight.shape()[2],
            self.weight.shape()[3],
        );
        (
            self.weight.shape()[0],
            out_dim(x.shape()[1], kh, self.stride.0, self.pad.0),
            out_dim(x.shape()[2], kw, self.stride.1, self.pad.1),
        )
    }

    fn im2col(&self, x: &Array3<f64>) -> Array2<f64> {
        let (in_c, kh, kw) = (
            self.weight.shape()[1],
            self.weight.shape()[2],
            self.weight.shape()[3],
        );
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let oh = out_dim(h, kh, self.stride.0, self.pad.0);
        let ow = out_dim(w, kw, self.stride.1, self.pad.1);
        let mut cols = Array2::zeros((in_c * kh * kw, oh * ow));
        for c in 0..in_c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (c * kh + ky) * kw + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride.0 + ky) as isize - self.pad.0 as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride.1 + kx) as isize - self.pad.1 as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            cols[[row, oy * ow + ox]] = x[[c, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
        cols
    }

    fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, Array2<f64>) {
        let (oc, oh, ow) = self.out_shape(x);
        let cols = self.im2col(x);
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((oc, cols.shape()[0]))
            .unwrap()
            .to_owned();
        let mut out2 = w2.dot(&cols);
        for (mut row, &b) in out2.outer_iter_mut().zip(self.bias.iter()) {
            row += b;
        }
        let out = out2.into_shape_with_order((oc, oh, ow)).unwrap();
        (out, cols)
    }

    /// Returns (dx, dw, db) given the output gradient and the cached cols.
    fn backward(
        &self,
        x_shape: (usize, usize, usize),
        cols: &Array2<f64>,
        dout: &Array3<f64>,
    ) -> (Array3<f64>, Array4<f64>, Array1<f64>) {
        let (oc, oh, ow) = (dout.shape()[0], dout.shape()[1], dout.shape()[2]);
        let dout2 = dout
            .view()
            .into_shape_with_order((oc, oh * ow))
            .unwrap()
            .to_owned();
        let dw2 = dout2.dot(&cols.t());
        let dw = dw2
            .into_shape_with_order((
                oc,
                self.weight.shape()[1],
                self.weight.shape()[2],
                self.weight.shape()[3],
            ))
            .unwrap();
        let db = dout2.sum_axis(ndarray::Axis(1));
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((oc, cols.shape()[0]))
            .unwrap()
            .to_owned();
        let dcols = w2.t().dot(&dout2);

        // col2im scatter.
        let (in_c, kh, kw) = (
            self.weight.shape()[1],
            self.weight.shape()[2],
            self.weight.shape()[3],
        );
        let (_, h, w) = x_shape;
        let mut dx = Array3::zeros(x_shape);
        for c in 0..in_c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (c * kh + ky) * kw + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride.0 + ky) as isize - self.pad.0 as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride.1 + kx) as isize - self.pad.1 as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            dx[[c, iy as usize, ix as usize]] += dcols[[row, oy * ow + ox]];
                        }
                    }
                }
            }
        }
        (dx, dw, db)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub weight: Array2<f64>, // [out, in]
    pub bias: Array1<f64>,
}

impl Linear {
    fn new(in_w: usize, out_w: usize, rng: &mut ChaCha8Rng) -> Self {
        let std = (2.0 / in_w as f64).sqrt();
        let dist = rand_distr::Normal::new(0.0, std).unwrap();
        Linear {
            weight: Array2::from_shape_fn((out_w, in_w), |_| dist.sample(rng)),
            bias: Array1::zeros(out_w),
        }
    }

    fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weight.dot(x) + &self.bias
    }

    fn backward(&self, x: &Array1<f64>, dout: &Array1<f64>) -> (Array1<f64>, Array2<f64>, Array1<f64>) {
        let dw = dout
            .view()
            .into_shape_with_order((dout.len(), 1))
            .unwrap()
            .dot(&x.view().into_shape_with_order((1, x.len())).unwrap());
        let dx = self.weight.t().dot(dout);
        (dx, dw, dout.clone())
    }
}

fn relu3(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_mask3(pre: &Array3<f64>, grad: &Array3<f64>) -> Array3<f64> {
    let mut g = grad.clone();
    g.zip_mut_with(pre, |gv, &p| {
        if p <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

fn relu1(x: &Array1<f64>) -> Array1<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_mask1(pre: &Array1<f64>, grad: &Array1<f64>) -> Array1<f64> {
    let mut g = grad.clone();
    g.zip_mut_with(pre, |gv, &p| {
        if p <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

/// 2×2 max pool with stride 2; returns output and argmax linear indices.
fn maxpool2(x: &Array3<f64>) -> (Array3<f64>, Vec<usize>) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, oh, ow));
    let mut arg = vec![0usize; c * oh * ow];
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (iy, ix) = (oy * 2 + dy, ox * 2 + dx);
                        let v = x[[ci, iy, ix]];
                        if v > best {
                            best = v;
                            best_idx = (ci * h + iy) * w + ix;
                        }
                    }
                }
                out[[ci, oy, ox]] = best;
                arg[(ci * oh + oy) * ow + ox] = best_idx;
            }
        }
    }
    (out, arg)
}

fn maxpool2_backward(
    x_shape: (usize, usize, usize),
    arg: &[usize],
    dout: &Array3<f64>,
) -> Array3<f64> {
    let mut dx = Array3::zeros(x_shape);
    let flat = dx.as_slice_mut().unwrap();
    for (i, &src) in arg.iter().enumerate() {
        flat[src] += dout.as_slice().unwrap()[i];
    }
    dx
}

/// Stable softmax cross-entropy: returns (loss, probabilities).
fn softmax_ce(logits: &Array1<f64>, label: usize) -> (f64, Array1<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|v| (v - m).exp());
    let z: f64 = exps.sum();
    let probs = exps / z;
    let loss = -(probs[label].max(1e-300)).ln();
    (loss, probs)
}

// ---------------------------------------------------------------------
// Residual block
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct ResBlock {
    pub conv_a: Conv2d,
    pub conv_b: Conv2d,
    pub shortcut: Conv2d, // 1×1, matches the stride-2 downsampling
}

struct ResBlockCache {
    x_shape: (usize, usize, usize),
    cols_a: Array2<f64>,
    a_pre: Array3<f64>,
    a: Array3<f64>,
    cols_b: Array2<f64>,
    cols_s: Array2<f64>,
    y_pre: Array3<f64>,
}

impl ResBlock {
    fn new(in_c: usize, out_c: usize, rng: &mut ChaCha8Rng) -> Self {
        ResBlock {
            conv_a: Conv2d::new(in_c, out_c, (3, 3), (2, 2), (1, 1), rng),
            conv_b: Conv2d::new(out_c, out_c, (3, 3), (1, 1), (1, 1), rng),
            shortcut: Conv2d::new(in_c, out_c, (1, 1), (2, 2), (0, 0), rng),
        }
    }

    fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, ResBlockCache) {
        let (a_pre, cols_a) = self.conv_a.forward(x);
        let a = relu3(&a_pre);
        let (b_pre, cols_b) = self.conv_b.forward(&a);
        let (s, cols_s) = self.shortcut.forward(x);
        let y_pre = &b_pre + &s;
        let y = relu3(&y_pre);
        let cache = ResBlockCache {
            x_shape: (x.shape()[0], x.shape()[1], x.shape()[2]),
            cols_a,
            a_pre,
            a,
            cols_b,
            cols_s,
            y_pre,
        };
        (y, cache)
    }

    #[allow(clippy::type_complexity)]
    fn backward(
        &self,
        cache: &ResBlockCache,
        dy: &Array3<f64>,
    ) -> (Array3<f64>, ResBlockGrads) {
        let dy_pre = relu_mask3(&cache.y_pre, dy);
        let a_shape = (
            cache.a.shape()[0],
            cache.a.shape()[1],
            cache.a.shape()[2],
        );
        let (da, dwb, dbb) = self.conv_b.backward(a_shape, &cache.cols_b, &dy_pre);
        let da_pre = relu_mask3(&cache.a_pre, &da);
        let (dx_main, dwa, dba) = self.conv_a.backward(cache.x_shape, &cache.cols_a, &da_pre);
        let (dx_sc, dws, dbs) = self.shortcut.backward(cache.x_shape, &cache.cols_s, &dy_pre);
        (
            dx_main + dx_sc,
            ResBlockGrads {
                dwa,
                dba,
                dwb,
                dbb,
                dws,
                dbs,
            },
        )
    }
}

pub(crate) struct ResBlockGrads {
    dwa: Array4<f64>,
    dba: Array1<f64>,
    dwb: Array4<f64>,
    dbb: Array1<f64>,
    dws: Array4<f64>,
    dbs: Array1<f64>,
}

// ---------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------

/// The two-headed recognition network.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    pub(crate) stem: Conv2d,
    pub(crate) block1: ResBlock,
    pub(crate) block2: ResBlock,
    pub(crate) block3: ResBlock,
    pub(crate) fc1: Linear,
    pub(crate) fc2: Linear,
    pub(crate) cond_fc1: Linear,
    pub(crate) cond_fc2: Linear,
}

/// Forward products needed by the heads and by callers.
pub struct ForwardOutput {
    /// Global-average-pooled trunk features.
    pub trunk: Array1<f64>,
    /// Speaker-head hidden activation (the layer-1 embedding).
    pub embedding: Array1<f64>,
    /// Speaker logits (layer-2).
    pub speaker_logits: Array1<f64>,
    /// Speaker softmax (layer-3).
    pub speaker_probs: Array1<f64>,
    /// Condition softmax.
    pub condition_probs: Array1<f64>,
}

struct TrunkCache {
    x: Array3<f64>,
    cols_stem: Array2<f64>,
    stem_pre: Array3<f64>,
    stem_out_shape: (usize, usize, usize),
    pool_arg: Vec<usize>,
    pooled_shape: (usize, usize, usize),
    b1: ResBlockCache,
    b2: ResBlockCache,
    b3: ResBlockCache,
    final_shape: (usize, usize, usize),
}

impl Network {
    /// Fresh network with seeded He initialization.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Network> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [c1, c2, c3] = spec.channels;
        Ok(Network {
            spec: spec.clone(),
            stem: Conv2d::new(1, c1, (3, 3), (2, 4), (1, 1), &mut rng),
            block1: ResBlock::new(c1, c1, &mut rng),
            block2: ResBlock::new(c1, c2, &mut rng),
            block3: ResBlock::new(c2, c3, &mut rng),
            fc1: Linear::new(c3, spec.embed_width, &mut rng),
            fc2: Linear::new(spec.embed_width, spec.n_speakers, &mut rng),
            cond_fc1: Linear::new(c3, spec.cond_hidden, &mut rng),
            cond_fc2: Linear::new(spec.cond_hidden, spec.n_conditions, &mut rng),
        })
    }

    fn forward_trunk(&self, feature: &Array2<f64>) -> (Array1<f64>, TrunkCache) {
        let (h, w) = (feature.shape()[0], feature.shape()[1]);
        let x = feature
            .view()
            .into_shape_with_order((1, h, w))
            .unwrap()
            .to_owned();
        let (stem_pre, cols_stem) = self.stem.forward(&x);
        let stem_act = relu3(&stem_pre);
        let (pooled, pool_arg) = maxpool2(&stem_act);
        let (y1, b1) = self.block1.forward(&pooled);
        let (y2, b2) = self.block2.forward(&y1);
        let (y3, b3) = self.block3.forward(&y2);
        let (c, fh, fw) = (y3.shape()[0], y3.shape()[1], y3.shape()[2]);
        let gap = Array1::from_iter(
            (0..c).map(|ci| y3.index_axis(ndarray::Axis(0), ci).sum() / (fh * fw) as f64),
        );
        let cache = TrunkCache {
            x,
            cols_stem,
            stem_out_shape: (
                stem_pre.shape()[0],
                stem_pre.shape()[1],
                stem_pre.shape()[2],
            ),
            stem_pre,
            pool_arg,
            pooled_shape: (
                pooled.shape()[0],
                pooled.shape()[1],
                pooled.shape()[2],
            ),
            b1,
            b2,
            b3,
            final_shape: (c, fh, fw),
        };
        (gap, cache)
    }

    /// Forward pass producing every head output.
    pub fn forward(&self, feature: &Array2<f64>) -> ForwardOutput {
        let (trunk, _) = self.forward_trunk(feature);
        self.heads_from_trunk(trunk)
    }

    fn heads_from_trunk(&self, trunk: Array1<f64>) -> ForwardOutput {
        let e_pre = self.fc1.forward(&trunk);
        let embedding = relu1(&e_pre);
        let speaker_logits = self.fc2.forward(&embedding);
        let (_, speaker_probs) = softmax_ce(&speaker_logits, 0);
        let c_pre = self.cond_fc1.forward(&trunk);
        let c_hidden = relu1(&c_pre);
        let cond_logits = self.cond_fc2.forward(&c_hidden);
        let (_, condition_probs) = softmax_ce(&cond_logits, 0);
        ForwardOutput {
            trunk,
            embedding,
            speaker_logits,
            speaker_probs,
            condition_probs,
        }
    }

    /// Speaker and condition cross-entropies of one labeled sample.
    pub fn forward_losses(
        &self,
        feature: &Array2<f64>,
        speaker: usize,
        condition: usize,
    ) -> Result<(f64, f64)> {
        self.check_labels(speaker, condition)?;
        let (trunk, _) = self.forward_trunk(feature);
        let e_pre = self.fc1.forward(&trunk);
        let embedding = relu1(&e_pre);
        let logits = self.fc2.forward(&embedding);
        let (ls, _) = softmax_ce(&logits, speaker);
        let c_pre = self.cond_fc1.forward(&trunk);
        let c_hidden = relu1(&c_pre);
        let c_logits = self.cond_fc2.forward(&c_hidden);
        let (lv, _) = softmax_ce(&c_logits, condition);
        Ok((ls, lv))
    }

    fn check_labels(&self, speaker: usize, condition: usize) -> Result<()> {
        if speaker >= self.spec.n_speakers {
            return Err(Error::LabelOutOfRange {
                got: speaker,
                num_classes: self.spec.n_speakers,
            });
        }
        if condition >= self.spec.n_conditions {
            return Err(Error::LabelOutOfRange {
                got: condition,
                num_classes: self.spec.n_conditions,
            });
        }
        Ok(())
    }

    /// Loss and flat gradient of one sample under the reversal semantics:
    /// the speaker head receives ∂L_s, the condition head +∂L_v, and the
    /// trunk ∂L_s − λ·∂L_v. Returns (L_s, L_v, gradient, predictions).
    pub fn loss_and_grad(
        &self,
        feature: &Array2<f64>,
        speaker: usize,
        condition: usize,
    ) -> Result<SampleGrad> {
        self.check_labels(speaker, condition)?;
        let (trunk, cache) = self.forward_trunk(feature);

        // Speaker head forward + backward.
        let e_pre = self.fc1.forward(&trunk);
        let embedding = relu1(&e_pre);
        let logits = self.fc2.forward(&embedding);
        let (ls, probs_s) = softmax_ce(&logits, speaker);
        let mut dlogits = probs_s.clone();
        dlogits[speaker] -= 1.0;
        let (d_embed, dw_fc2, db_fc2) = self.fc2.backward(&embedding, &dlogits);
        let d_e_pre = relu_mask1(&e_pre, &d_embed);
        let (d_trunk_s, dw_fc1, db_fc1) = self.fc1.backward(&trunk, &d_e_pre);

        // Condition head forward + backward (its own positive gradient).
        let c_pre = self.cond_fc1.forward(&trunk);
        let c_hidden = relu1(&c_pre);
        let c_logits = self.cond_fc2.forward(&c_hidden);
        let (lv, probs_v) = softmax_ce(&c_logits, condition);
        let mut dc_logits = probs_v.clone();
        dc_logits[condition] -= 1.0;
        let (d_chidden, dw_cfc2, db_cfc2) = self.cond_fc2.backward(&c_hidden, &dc_logits);
        let d_c_pre = relu_mask1(&c_pre, &d_chidden);
        let (d_trunk_v, dw_cfc1, db_cfc1) = self.cond_fc1.backward(&trunk, &d_c_pre);

        // Gradient reversal at the boundary: the trunk sees −λ times the
        // condition gradient.
        let d_trunk = &d_trunk_s - &(&d_trunk_v * self.spec.lambda);

        let trunk_grads = self.backward_trunk(&cache, &d_trunk);

        let mut grad = NetGrads {
            stem_w: trunk_grads.0,
            stem_b: trunk_grads.1,
            b1: trunk_grads.2,
            b2: trunk_grads.3,
            b3: trunk_grads.4,
            fc1_w: dw_fc1,
            fc1_b: db_fc1,
            fc2_w: dw_fc2,
            fc2_b: db_fc2,
            cond_fc1_w: dw_cfc1,
            cond_fc1_b: db_cfc1,
            cond_fc2_w: dw_cfc2,
            cond_fc2_b: db_cfc2,
        };
        let flat = grad.flatten(&self.spec);
        grad.clear();
        Ok(SampleGrad {
            loss_speaker: ls,
            loss_condition: lv,
            grad: flat,
            speaker_pred: argmax(&probs_s),
            condition_pred: argmax(&probs_v),
        })
    }

    #[allow(clippy::type_complexity)]
    fn backward_trunk(
        &self,
        cache: &TrunkCache,
        d_gap: &Array1<f64>,
    ) -> (
        Array4<f64>,
        Array1<f64>,
        ResBlockGrads,
        ResBlockGrads,
        ResBlockGrads,
    ) {
        let (c, fh, fw) = cache.final_shape;
        let mut dy3 = Array3::zeros((c, fh, fw));
        let inv = 1.0 / (fh * fw) as f64;
        for ci in 0..c {
            let g = d_gap[ci] * inv;
            dy3.index_axis_mut(ndarray::Axis(0), ci).fill(g);
        }
        let (dy2, g3) = self.block3.backward(&cache.b3, &dy3);
        let (dy1, g2) = self.block2.backward(&cache.b2, &dy2);
        let (dpool, g1) = self.block1.backward(&cache.b1, &dy1);
        let dstem_act = maxpool2_backward(cache.stem_out_shape, &cache.pool_arg, &dpool);
        let dstem_pre = relu_mask3(&cache.stem_pre, &dstem_act);
        let x_shape = (
            cache.x.shape()[0],
            cache.x.shape()[1],
            cache.x.shape()[2],
        );
        let (_, dw_stem, db_stem) =
            self.stem
                .backward(x_shape, &cache.cols_stem, &dstem_pre);
        let _ = cache.pooled_shape;
        (dw_stem, db_stem, g1, g2, g3)
    }

    // --- flat parameter plumbing -------------------------------------

    fn tensors(&self) -> Vec<(String, ParamGroup, Vec<f64>, Vec<usize>)> {
        let mut out = Vec::new();
        let conv = |name: &str, group, c: &Conv2d, out: &mut Vec<(String, ParamGroup, Vec<f64>, Vec<usize>)>| {
            out.push((
                format!("{name}.weight"),
                group,
                c.weight.iter().copied().collect(),
                c.weight.shape().to_vec(),
            ));
            out.push((
                format!("{name}.bias"),
                group,
                c.bias.to_vec(),
                vec![c.bias.len()],
            ));
        };
        let lin = |name: &str, group, l: &Linear, out: &mut Vec<(String, ParamGroup, Vec<f64>, Vec<usize>)>| {
            out.push((
                format!("{name}.weight"),
                group,
                l.weight.iter().copied().collect(),
                l.weight.shape().to_vec(),
            ));
            out.push((
                format!("{name}.bias"),
                group,
                l.bias.to_vec(),
                vec![l.bias.len()],
            ));
        };
        conv("stem", ParamGroup::Trunk, &self.stem, &mut out);
        for (i, b) in [&self.block1, &self.block2, &self.block3]
            .into_iter()
            .enumerate()
        {
            conv(&format!("block{}.conv_a", i + 1), ParamGroup::Trunk, &b.conv_a, &mut out);
            conv(&format!("block{}.conv_b", i + 1), ParamGroup::Trunk, &b.conv_b, &mut out);
            conv(
                &format!("block{}.shortcut", i + 1),
                ParamGroup::Trunk,
                &b.shortcut,
                &mut out,
            );
        }
        lin("speaker.fc1", ParamGroup::SpeakerHead, &self.fc1, &mut out);
        lin("speaker.fc2", ParamGroup::SpeakerHead, &self.fc2, &mut out);
        lin("condition.fc1", ParamGroup::ConditionHead, &self.cond_fc1, &mut out);
        lin("condition.fc2", ParamGroup::ConditionHead, &self.cond_fc2, &mut out);
        out
    }

    /// (name, group, length) for every tensor, in flat order.
    pub fn tensor_layout(&self) -> Vec<(String, ParamGroup, Vec<usize>)> {
        self.tensors()
            .into_iter()
            .map(|(n, g, _, s)| (n, g, s))
            .collect()
    }

    /// All parameters concatenated in tensor order.
    pub fn params_flat(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, _, v, _)| v)
            .collect()
    }

    /// Per-parameter group markers aligned with [`Network::params_flat`].
    pub fn param_groups_flat(&self) -> Vec<ParamGroup> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, g, v, _)| std::iter::repeat(g).take(v.len()))
            .collect()
    }

    /// Writes a flat parameter vector back into the layer tensors.
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected: usize = self.tensors().iter().map(|(_, _, v, _)| v.len()).sum();
        if flat.len() != expected {
            return Err(Error::BadCheckpoint(format!(
                "parameter count {} != expected {expected}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut take = |n: usize| {
            let s = &flat[offset..offset + n];
            offset += n;
            s.to_vec()
        };
        let conv = |c: &mut Conv2d, take: &mut dyn FnMut(usize) -> Vec<f64>| {
            let wlen = c.weight.len();
            let w = take(wlen);
            c.weight = Array4::from_shape_vec(
                (
                    c.weight.shape()[0],
                    c.weight.shape()[1],
                    c.weight.shape()[2],
                    c.weight.shape()[3],
                ),
                w,
            )
            .unwrap();
            let blen = c.bias.len();
            c.bias = Array1::from_vec(take(blen));
        };
        let lin = |l: &mut Linear, take: &mut dyn FnMut(usize) -> Vec<f64>| {
            let wlen = l.weight.len();
            let w = take(wlen);
            l.weight =
                Array2::from_shape_vec((l.weight.shape()[0], l.weight.shape()[1]), w).unwrap();
            let blen = l.bias.len();
            l.bias = Array1::from_vec(take(blen));
        };
        conv(&mut self.stem, &mut take);
        for b in [&mut self.block1, &mut self.block2, &mut self.block3] {
            conv(&mut b.conv_a, &mut take);
            conv(&mut b.conv_b, &mut take);
            conv(&mut b.shortcut, &mut take);
        }
        lin(&mut self.fc1, &mut take);
        lin(&mut self.fc2, &mut take);
        lin(&mut self.cond_fc1, &mut take);
        lin(&mut self.cond_fc2, &mut take);
        Ok(())
    }
}

fn argmax(v: &Array1<f64>) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// One sample's losses, flat gradient, and head predictions.
pub struct SampleGrad {
    pub loss_speaker: f64,
    pub loss_condition: f64,
    pub grad: Vec<f64>,
    pub speaker_pred: usize,
    pub condition_pred: usize,
}

struct NetGrads {
    stem_w: Array4<f64>,
    stem_b: Array1<f64>,
    b1: ResBlockGrads,
    b2: ResBlockGrads,
    b3: ResBlockGrads,
    fc1_w: Array2<f64>,
    fc1_b: Array1<f64>,
    fc2_w: Array2<f64>,
    fc2_b: Array1<f64>,
    cond_fc1_w: Array2<f64>,
    cond_fc1_b: Array1<f64>,
    cond_fc2_w: Array2<f64>,
    cond_fc2_b: Array1<f64>,
}

impl NetGrads {
    fn flatten(&self, _spec: &NetworkSpec) -> Vec<f64> {
        let mut out = Vec::new();
        let push4 = |a: &Array4<f64>, out: &mut Vec<f64>| out.extend(a.iter().copied());
        let push2 = |a: &Array2<f64>, out: &mut Vec<f64>| out.extend(a.iter().copied());
        let push1 = |a: &Array1<f64>, out: &mut Vec<f64>| out.extend(a.iter().copied());
        push4(&self.stem_w, &mut out);
        push1(&self.stem_b, &mut out);
        for b in [&self.b1, &self.b2, &self.b3] {
            push4(&b.dwa, &mut out);
            push1(&b.dba, &mut out);
            push4(&b.dwb, &mut out);
            push1(&b.dbb, &mut out);
            push4(&b.dws, &mut out);
            push1(&b.dbs, &mut out);
        }
        push2(&self.fc1_w, &mut out);
        push1(&self.fc1_b, &mut out);
        push2(&self.fc2_w, &mut out);
        push1(&self.fc2_b, &mut out);
        push2(&self.cond_fc1_w, &mut out);
        push1(&self.cond_fc1_b, &mut out);
        push2(&self.cond_fc2_w, &mut out);
        push1(&self.cond_fc2_b, &mut out);
        out
    }

    fn clear(&mut self) {}
}

/// Batch DAL loss and mean gradient: `L = mean(L_s) − λ·mean(L_v)` with
/// the reversal semantics baked into the per-parameter gradient.
pub fn dal_loss(
    net: &Network,
    batch: &[(&Array2<f64>, usize, usize)],
) -> Result<(f64, f64, f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter {
            name: "batch",
            reason: "empty batch".into(),
        });
    }
    let mut grad = vec![0.0; net.params_flat().len()];
    let mut ls_sum = 0.0;
    let mut lv_sum = 0.0;
    for &(feature, speaker, condition) in batch {
        let s = net.loss_and_grad(feature, speaker, condition)?;
        ls_sum += s.loss_speaker;
        lv_sum += s.loss_condition;
        for (g, d) in grad.iter_mut().zip(s.grad.iter()) {
            *g += d;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= inv;
    }
    let ls = ls_sum * inv;
    let lv = lv_sum * inv;
    Ok((ls - net.spec.lambda * lv, ls, lv, grad))
}
