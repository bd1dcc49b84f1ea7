//! Shared FFT plumbing: cached planners, fast convolution, cross-correlation.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward FFT.
pub fn fft_forward(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

/// In-place inverse FFT, scaled by 1/n.
pub fn fft_inverse(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Linear convolution of `signal` with `kernel`, truncated to `signal.len()`
/// after dropping the kernel group delay of `(kernel.len() - 1) / 2` samples.
///
/// With a symmetric (linear-phase) kernel this yields a zero-delay filtered
/// signal of the same length as the input.
pub fn convolve_same_centered(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let full = convolve_full(signal, kernel);
    let delay = (kernel.len() - 1) / 2;
    full[delay..delay + signal.len()].to_vec()
}

/// Zero-delay filtering with replicate padding: the signal is extended on
/// both sides with its edge values before convolving, so a constant input
/// stays constant (or cancels exactly in a DC-blocking filter) instead of
/// picking up edge transients.
pub fn convolve_same_replicate(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    if signal.is_empty() {
        return Vec::new();
    }
    let half = (kernel.len() - 1) / 2;
    let mut ext = Vec::with_capacity(signal.len() + 2 * half);
    ext.extend(std::iter::repeat(signal[0]).take(half));
    ext.extend_from_slice(signal);
    ext.extend(std::iter::repeat(*signal.last().unwrap()).take(half));
    let full = convolve_full(&ext, kernel);
    full[2 * half..2 * half + signal.len()].to_vec()
}

/// Full linear convolution; FFT-based above a small size threshold.
pub fn convolve_full(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let out_len = signal.len() + kernel.len() - 1;
    if signal.len().saturating_mul(kernel.len()) < 1 << 14 {
        let mut out = vec![0.0; out_len];
        for (i, &s) in signal.iter().enumerate() {
            for (j, &k) in kernel.iter().enumerate() {
                out[i + j] += s * k;
            }
        }
        return out;
    }
    let n = next_pow2(out_len);
    let mut a: Vec<Complex64> = signal
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut b: Vec<Complex64> = kernel
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft_forward(&mut a);
    fft_forward(&mut b);
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x *= *y;
    }
    fft_inverse(&mut a);
    a[..out_len].iter().map(|c| c.re).collect()
}

/// Cross-correlation values `r[tau] = sum_t a[t] * b[t - tau]` for
/// `tau` in `[-max_lag, max_lag]`, returned as a vector indexed by
/// `tau + max_lag`. `b` is taken from the full slice; indices outside
/// either slice contribute zero.
pub fn cross_correlation(a: &[f64], b: &[f64], max_lag: usize) -> Vec<f64> {
    // r[tau] = conv(a, reverse(b)) evaluated at shifted offsets.
    let full = convolve_full(a, &b.iter().rev().copied().collect::<Vec<_>>());
    // full[k] = sum_i a[i] * b[b.len() - 1 - (k - i)]; matching b[i - tau]
    // requires k = b.len() - 1 + tau.
    let n_lags = 2 * max_lag + 1;
    let mut out = vec![0.0; n_lags];
    for (idx, slot) in out.iter_mut().enumerate() {
        let tau = idx as i64 - max_lag as i64;
        let k = b.len() as i64 - 1 + tau;
        if k >= 0 && (k as usize) < full.len() {
            *slot = full[k as usize];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_matches_direct() {
        let sig: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let ker: Vec<f64> = (0..33).map(|i| ((i * 31) % 17) as f64 / 8.0 - 1.0).collect();
        let fast = convolve_full(&sig, &ker);
        let mut direct = vec![0.0; sig.len() + ker.len() - 1];
        for (i, &s) in sig.iter().enumerate() {
            for (j, &k) in ker.iter().enumerate() {
                direct[i + j] += s * k;
            }
        }
        for (f, d) in fast.iter().zip(direct.iter()) {
            assert!((f - d).abs() < 1e-9, "{f} vs {d}");
        }
    }

    #[test]
    fn cross_correlation_matches_direct() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..500).map(|i| (i as f64 * 0.11).cos()).collect();
        let max_lag = 40;
        let fast = cross_correlation(&a, &b, max_lag);
        for tau in -(max_lag as i64)..=max_lag as i64 {
            let mut acc = 0.0;
            for (i, &av) in a.iter().enumerate() {
                let j = i as i64 - tau;
                if j >= 0 && (j as usize) < b.len() {
                    acc += av * b[j as usize];
                }
            }
            let got = fast[(tau + max_lag as i64) as usize];
            assert!((acc - got).abs() < 1e-9, "tau {tau}: {acc} vs {got}");
        }
    }
}
