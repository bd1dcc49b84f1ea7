//! Window tapers for framing and filter design.

use serde::{Deserialize, Serialize};

/// Taper applied to analysis frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowFunction {
    #[default]
    Hann,
    Hamming,
    Blackman,
    Rectangular,
}

impl WindowFunction {
    /// Symmetric window of `n` samples.
    pub fn samples(self, n: usize) -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![1.0];
        }
        let m = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let x = i as f64 / m;
                match self {
                    WindowFunction::Hann => 0.5 - 0.5 * (2.0 * std::f64::consts::PI * x).cos(),
                    WindowFunction::Hamming => 0.54 - 0.46 * (2.0 * std::f64::consts::PI * x).cos(),
                    WindowFunction::Blackman => {
                        0.42 - 0.5 * (2.0 * std::f64::consts::PI * x).cos()
                            + 0.08 * (4.0 * std::f64::consts::PI * x).cos()
                    }
                    WindowFunction::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hann_is_symmetric_and_zero_ended() {
        let w = WindowFunction::Hann.samples(41);
        assert!(w[0].abs() < 1e-12);
        assert!(w[40].abs() < 1e-12);
        assert!((w[20] - 1.0).abs() < 1e-12);
        for i in 0..41 {
            assert!((w[i] - w[40 - i]).abs() < 1e-12);
        }
    }
}
