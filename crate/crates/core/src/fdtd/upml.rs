//! Graded conductivity profiles for the uniaxial PML.

use crate::media::{EPS0, ETA0};

const GRADING_ORDER: i32 = 3;

/// Normalized PML loss `s = σΔt/(2ε₀)` sampled at integer and half-integer
/// node positions along one axis of `n` nodes with `thickness` PML cells on
/// each end.
#[derive(Debug, Clone)]
pub(crate) struct AxisPml {
    pub int: Vec<f64>,
    pub half: Vec<f64>,
}

impl AxisPml {
    pub fn new(n: usize, thickness: usize, spacing: f64, dt: f64) -> Self {
        let d = thickness as f64;
        let lo = d;
        let hi = (n - 1) as f64 - d;
        let sigma_max = 0.8 * (GRADING_ORDER + 1) as f64 / (ETA0 * spacing);
        let s = |u: f64| {
            let depth = if u < lo {
                lo - u
            } else if u > hi {
                u - hi
            } else {
                return 0.0;
            };
            sigma_max * (depth / d).powi(GRADING_ORDER) * dt / (2.0 * EPS0)
        };
        Self {
            int: (0..n).map(|i| s(i as f64)).collect(),
            half: (0..n).map(|i| s(i as f64 + 0.5)).collect(),
        }
    }

    /// Interior index range `[first, last)` of `samples` with zero loss.
    pub fn interior(samples: &[f64]) -> (usize, usize) {
        let first = samples
            .iter()
            .position(|&s| s == 0.0)
            .unwrap_or(samples.len());
        let last = samples
            .iter()
            .rposition(|&s| s == 0.0)
            .map_or(first, |l| l + 1);
        (first, last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_is_zero_inside_and_graded_outside() {
        let p = AxisPml::new(40, 8, 1e-3, 1e-12);
        assert_eq!(AxisPml::interior(&p.int), (8, 32));
        assert!(p.int[0] > p.int[4] && p.int[4] > p.int[7] && p.int[7] > 0.0);
        assert!((p.int[0] - p.int[39]).abs() < 1e-15);
        assert_eq!(AxisPml::interior(&p.half), (8, 31));
    }
}
