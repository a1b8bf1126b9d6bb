//! Descriptive statistics.

use serde::Serialize;

use crate::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (`n − 1` denominator).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Linear interpolation between order statistics of an ascending sample
/// ("type 7"): position `(n − 1)·q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn quantile(x: &[f64], q: f64) -> f64 {
    quantile_sorted(&sorted_copy(x), q)
}

pub fn iqr(x: &[f64]) -> f64 {
    let s = sorted_copy(x);
    quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub iqr: f64,
    /// `(1/n) Σ ((x − μ)/σ)³`; absent for a constant sample.
    pub skewness: Option<f64>,
    /// `(1/n) Σ ((x − μ)/σ)⁴ − 3`; absent for a constant sample or `n < 4`.
    pub kurtosis_excess: Option<f64>,
}

/// Summary of a sample of at least two finite values.
pub fn summarize(x: &[f64]) -> Result<StatSummary> {
    if x.len() < 2 {
        return Err(Error::Degenerate(format!(
            "summary needs at least 2 values, got {}",
            x.len()
        )));
    }
    Error::check_finite("sample", x)?;
    let n = x.len();
    let s = sorted_copy(x);
    let m = mean(x);
    let sd = std_dev(x);
    let (skewness, kurtosis_excess) = if sd > 0.0 {
        let nf = n as f64;
        let m3 = x.iter().map(|v| ((v - m) / sd).powi(3)).sum::<f64>() / nf;
        let m4 = x.iter().map(|v| ((v - m) / sd).powi(4)).sum::<f64>() / nf;
        (Some(m3), (n >= 4).then_some(m4 - 3.0))
    } else {
        (None, None)
    };
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    Ok(StatSummary {
        n,
        mean: m,
        std: sd,
        min: s[0],
        q1,
        median: quantile_sorted(&s, 0.5),
        q3,
        max: s[n - 1],
        iqr: q3 - q1,
        skewness,
        kurtosis_excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_sample() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.n, s.mean, s.std, s.min, s.max), (3, 2.0, 1.0, 1.0, 3.0));
        assert_eq!(s.skewness, Some(0.0));
        assert_eq!(s.kurtosis_excess, None);
    }

    #[test]
    fn skew_uses_sample_std_with_population_average() {
        // mean 0.25, sample std 0.5: deviations (−0.5, −0.5, −0.5, 1.5)
        // → (1/4)(3·(−0.125) + 3.375) = 0.75
        let s = summarize(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((s.std - 0.5).abs() < 1e-15);
        assert!((s.skewness.unwrap() - 0.75).abs() < 1e-14);
        // (1/4)(3·0.0625 + 5.0625) − 3
        assert!((s.kurtosis_excess.unwrap() - (5.25 / 4.0 - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn quantiles() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.q1, s.q3, s.iqr), (1.75, 3.25, 1.5));
        assert_eq!(s.median, 2.5);
        assert_eq!(quantile(&[5.0], 0.3), 5.0);
    }

    #[test]
    fn degenerate_samples() {
        assert!(summarize(&[1.0]).is_err());
        let s = summarize(&[2.0; 5]).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.skewness, None);
        assert_eq!(s.kurtosis_excess, None);
    }
}
