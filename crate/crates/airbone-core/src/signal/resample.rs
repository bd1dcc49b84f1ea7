//! Sample-rate reduction by windowed-sinc interpolation with anti-alias
//! filtering built into the kernel.

use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Downsamples `w` to `target_rate`. Upsampling is rejected; equal rates
/// return the input unchanged. Content above the new Nyquist is pushed
/// at least 40 dB down before decimation.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::EmptySignal("resample input"));
    }
    if target_rate == 0 {
        return Err(Error::InvalidSampleRate(target_rate));
    }
    let source = w.sample_rate();
    if target_rate > source {
        return Err(Error::UpsampleUnsupported {
            target: target_rate,
            source_rate: source,
        });
    }
    if target_rate == source {
        return Ok(w.clone());
    }

    let fs_in = source as f64;
    let ratio = target_rate as f64 / fs_in;
    let n_out = (w.len() as f64 * ratio).round() as usize;

    // Kernel: Blackman-windowed sinc, cutoff at 0.45 * target rate, so the
    // stopband (~74 dB down) starts just below the new Nyquist.
    let cutoff_norm = 0.45 * target_rate as f64 / fs_in;
    let transition_norm = 0.1 * target_rate as f64 / fs_in;
    let half_width = (2.75 / transition_norm).ceil();

    let kernel = |u: f64| -> f64 {
        if u.abs() > half_width {
            return 0.0;
        }
        let x = 2.0 * cutoff_norm * u;
        let sinc = if x == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        };
        let t = u / half_width;
        let win = 0.42 + 0.5 * (std::f64::consts::PI * t).cos()
            + 0.08 * (2.0 * std::f64::consts::PI * t).cos();
        sinc * win
    };

    let x = w.samples();
    let hw = half_width as i64;
    let mut out = Vec::with_capacity(n_out);

    if source % target_rate == 0 {
        // Integer decimation: one kernel phase, precomputed.
        let step = (source / target_rate) as usize;
        let taps: Vec<f64> = (-hw..=hw).map(|j| kernel(j as f64)).collect();
        for m in 0..n_out {
            let center = (m * step) as i64;
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (ti, &h) in taps.iter().enumerate() {
                let idx = center + ti as i64 - hw;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += x[idx as usize] * h;
                    norm += h;
                }
            }
            out.push(if norm > 0.0 { acc / norm * taps.iter().sum::<f64>() } else { 0.0 });
        }
        // The partial-kernel normalization above keeps edge gain flat; the
        // interior uses the full tap sum, which is the DC gain.
        let dc: f64 = taps.iter().sum();
        for v in out.iter_mut() {
            *v /= dc;
        }
    } else {
        // Fractional ratio: evaluate the kernel at the exact offsets.
        for m in 0..n_out {
            let center = m as f64 / ratio;
            let lo = (center.floor() as i64 - hw).max(0);
            let hi = ((center.floor() as i64) + hw).min(x.len() as i64 - 1);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for idx in lo..=hi {
                let h = kernel(idx as f64 - center);
                acc += x[idx as usize] * h;
                norm += h;
            }
            out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
        }
    }

    Waveform::new(out, target_rate)
}
