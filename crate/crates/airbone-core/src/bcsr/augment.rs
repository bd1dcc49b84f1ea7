//! Training-time augmentation on the time axis only: random flip, crop
//! with zero-padding, and circular translation. The frequency axis is
//! never touched; bone spectral patterns are the biometric.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::bcsr::feature::BcFeature;
use crate::synth::subseed;

/// Reverses the frame order.
pub fn flip_time(m: &Array2<f64>) -> Array2<f64> {
    let frames = m.ncols();
    let mut out = m.clone();
    for b in 0..m.nrows() {
        for t in 0..frames {
            out[[b, t]] = m[[b, frames - 1 - t]];
        }
    }
    out
}

/// Circular shift by `k` frames; per-bin totals are exactly preserved.
pub fn translate_time(m: &Array2<f64>, k: usize) -> Array2<f64> {
    let frames = m.ncols();
    let k = k % frames.max(1);
    let mut out = Array2::zeros(m.raw_dim());
    for b in 0..m.nrows() {
        for t in 0..frames {
            out[[b, (t + k) % frames]] = m[[b, t]];
        }
    }
    out
}

/// Keeps `len` frames starting at `start`, moved to the front, zero-padding
/// the rest; the output shape is unchanged.
pub fn crop_pad(m: &Array2<f64>, start: usize, len: usize) -> Array2<f64> {
    let frames = m.ncols();
    let start = start.min(frames);
    let len = len.min(frames - start);
    let mut out = Array2::zeros(m.raw_dim());
    for b in 0..m.nrows() {
        for t in 0..len {
            out[[b, t]] = m[[b, start + t]];
        }
    }
    out
}

/// Random time-axis augmentation, deterministic in the seed: flip with
/// probability ½, crop of 85–100% of the frames, then a circular
/// translation.
pub fn augment(f: &BcFeature, seed: u64) -> BcFeature {
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, 0xA46));
    let frames = f.frames();
    let mut m = f.cqt.magnitudes.clone();
    if rng.gen_bool(0.5) {
        m = flip_time(&m);
    }
    let keep = ((rng.gen_range(0.85..=1.0) * frames as f64) as usize).max(1);
    let start = rng.gen_range(0..=frames - keep);
    m = crop_pad(&m, start, keep);
    let shift = rng.gen_range(0..frames.max(1));
    m = translate_time(&m, shift);

    let mut out = f.clone();
    out.cqt.magnitudes = m;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{FrequencyScale, Spectrogram};
    use crate::synth::BcCondition;

    fn feature() -> BcFeature {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Array2::from_shape_fn((12, 30), |_| rng.gen_range(0.0..1.0));
        BcFeature {
            cqt: Spectrogram {
                magnitudes: m,
                bin_frequencies: (0..12).map(|i| 100.0 * 1.1f64.powi(i)).collect(),
                frame_times: (0..30).map(|i| i as f64 * 0.01).collect(),
                scale: FrequencyScale::Log,
            },
            condition_label: BcCondition::Still,
            speaker_label: None,
        }
    }

    #[test]
    fn translation_preserves_per_bin_totals() {
        let f = feature();
        let shifted = translate_time(&f.cqt.magnitudes, 13);
        for b in 0..f.bins() {
            let before: f64 = (0..f.frames()).map(|t| f.cqt.magnitudes[[b, t]]).sum();
            let after: f64 = (0..f.frames()).map(|t| shifted[[b, t]]).sum();
            assert!((before - after).abs() < 1e-9);
        }
    }

    #[test]
    fn flip_is_an_involution() {
        let f = feature();
        let twice = flip_time(&flip_time(&f.cqt.magnitudes));
        assert_eq!(twice, f.cqt.magnitudes);
    }

    #[test]
    fn augment_is_deterministic_and_shape_preserving() {
        let f = feature();
        let a = augment(&f, 99);
        let b = augment(&f, 99);
        assert_eq!(a.cqt.magnitudes, b.cqt.magnitudes);
        assert_eq!(a.cqt.magnitudes.dim(), f.cqt.magnitudes.dim());
        assert_eq!(a.cqt.bin_frequencies, f.cqt.bin_frequencies);
    }

    #[test]
    fn different_seeds_differ() {
        let f = feature();
        let a = augment(&f, 1);
        let b = augment(&f, 2);
        assert_ne!(a.cqt.magnitudes, b.cqt.magnitudes);
    }
}
