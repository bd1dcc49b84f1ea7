//! Correlation and energy statistics.

use crate::error::{Error, Result};

/// Pearson correlation coefficient in [-1, 1].
///
/// A sequence with zero variance yields 0: constant bins carry no
/// relationship information and must not abort scoring.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::CorrelationTooShort(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Mean power of a slice.
pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Signal-to-noise ratio in dB of `signal` against a known `noise`
/// realization of the same length.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    let ps = mean_power(signal);
    let pn = mean_power(noise);
    10.0 * (ps / pn.max(1e-300)).log10()
}

/// Gain that scales `noise` to sit `snr_db` below `signal`.
pub fn noise_gain_for_snr(signal: &[f64], noise: &[f64], snr_db: f64) -> f64 {
    let ps = mean_power(signal);
    let pn = mean_power(noise);
    if pn == 0.0 || ps == 0.0 {
        return 0.0;
    }
    (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_of_identical_is_one() {
        let x = vec![1.0, 2.0, 5.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_negated_is_minus_one() {
        let x = vec![1.0, 2.0, 5.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_matches_direct_formula() {
        // Textbook formula evaluated by hand for x=[1,2,3,4], y=[2,4,6,8.5].
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.5];
        let n = 4.0;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        let expect = (n * sxy - sx * sy)
            / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        let got = pearson(&x, &y).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn pearson_zero_variance_is_zero() {
        let x = [3.0, 3.0, 3.0];
        let y = [1.0, 2.0, 3.0];
        assert_eq!(pearson(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn pearson_rejects_bad_lengths() {
        assert!(pearson(&[1.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn noise_gain_hits_requested_snr() {
        let sig: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.1).sin()).collect();
        let noise: Vec<f64> = (0..1000).map(|i| ((i * 31 % 17) as f64 - 8.0) / 8.0).collect();
        let g = noise_gain_for_snr(&sig, &noise, 6.0);
        let scaled: Vec<f64> = noise.iter().map(|v| v * g).collect();
        assert!((snr_db(&sig, &scaled) - 6.0).abs() < 1e-9);
    }
}
