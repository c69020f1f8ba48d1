//! Sample entropy (Richman & Moorman): `-ln(A/B)` where `B` counts pairs of
//! length-`m` templates within Chebyshev distance `r` and `A` counts the same
//! for length `m + 1`. Self-matches are excluded and both template sets start
//! at the same `N - m` offsets.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleEntropy {
    /// `-ln(A/B)`, or `+inf` when either count is zero.
    pub value: f64,
    pub matches_m1: u64,
    pub matches_m: u64,
    /// Set when `A == 0` or `B == 0`.
    pub undefined: bool,
}

pub fn sample_entropy(series: &[f64], m: usize, r: f64) -> Result<SampleEntropy> {
    let n = series.len();
    if m == 0 || n <= m + 1 {
        return Err(Error::param(format!(
            "sample entropy needs length > m + 1 (length {n}, m {m})"
        )));
    }
    if !(r >= 0.0) {
        return Err(Error::param(format!("tolerance r must be >= 0, got {r}")));
    }
    let count = n - m;
    let (mut b, mut a) = (0u64, 0u64);
    for i in 0..count {
        for j in (i + 1)..count {
            if (0..m).all(|k| (series[i + k] - series[j + k]).abs() <= r) {
                b += 1;
                if (series[i + m] - series[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    let undefined = a == 0 || b == 0;
    let value = if undefined {
        f64::INFINITY
    } else {
        -((a as f64) / (b as f64)).ln()
    };
    Ok(SampleEntropy {
        value,
        matches_m1: a,
        matches_m: b,
        undefined,
    })
}

/// `m = 2`, `r = 0.2 * std(series)`.
pub fn sample_entropy_default(series: &[f64]) -> Result<SampleEntropy> {
    sample_entropy(series, 2, 0.2 * super::std_dev(series))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_zero() {
        let e = sample_entropy(&[3.0; 50], 2, 0.2).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.matches_m, e.matches_m1);
        let e = sample_entropy_default(&[3.0; 50]).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn no_matches_is_flagged() {
        let x: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let e = sample_entropy(&x, 2, 0.1).unwrap();
        assert!(e.undefined);
        assert!(e.value.is_infinite());
    }

    #[test]
    fn precondition_errors() {
        assert!(sample_entropy(&[1.0, 2.0, 3.0], 2, 0.2).is_err());
        assert!(sample_entropy(&[1.0; 10], 2, -1.0).is_err());
    }
}
