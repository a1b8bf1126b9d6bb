//! Gaussian kernel density estimation.

use serde::Serialize;

use super::descriptive::{iqr, mean, std_dev};
use crate::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `0.9 · min(σ, IQR/1.34) · n^(−1/5)`. When the IQR vanishes but σ does not,
/// σ alone is used.
pub fn silverman_bandwidth(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let sd = std_dev(sample);
    let spread = match iqr(sample) / 1.34 {
        q if q > 0.0 => sd.min(q),
        _ => sd,
    };
    0.9 * spread * n.powf(-0.2)
}

/// Bandwidth used when none is supplied: Silverman's rule, or for a
/// zero-spread sample `1e-3 · range`, or `1e-3 · max(|mean|, 1)` when all
/// values coincide.
pub fn default_bandwidth(sample: &[f64]) -> f64 {
    let h = silverman_bandwidth(sample);
    if h > 0.0 {
        return h;
    }
    let (lo, hi) = sample
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = hi - lo;
    if range > 0.0 {
        1e-3 * range
    } else {
        1e-3 * mean(sample).abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeCurve {
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

/// `f̂(x) = (1/(n h)) Σ φ((x − xⱼ)/h)` on `grid`.
///
/// A single observation is accepted only with an explicit bandwidth.
pub fn kde(sample: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<KdeCurve> {
    if sample.is_empty() {
        return Err(Error::Degenerate("KDE of an empty sample".into()));
    }
    Error::check_finite("KDE sample", sample)?;
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {h}"))),
        None if sample.len() < 2 => {
            return Err(Error::Degenerate(
                "KDE of one observation needs an explicit bandwidth".into(),
            ))
        }
        None => default_bandwidth(sample),
    };
    let norm = 1.0 / (sample.len() as f64 * h);
    let density = grid
        .iter()
        .map(|&x| {
            norm * sample
                .iter()
                .map(|&xj| {
                    let u = (x - xj) / h;
                    INV_SQRT_2PI * (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(KdeCurve {
        bandwidth: h,
        x: grid.to_vec(),
        density,
    })
}

/// `points` evenly spaced values from `min − pad·h` to `max + pad·h`.
pub fn padded_grid(sample: &[f64], h: f64, pad: f64, points: usize) -> Vec<f64> {
    let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min) - pad * h;
    let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad * h;
    let step = (hi - lo) / (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|i| lo + step * i as f64).collect()
}

/// Curve on a 512-point grid spanning five bandwidths beyond the sample.
pub fn kde_auto(sample: &[f64], bandwidth: Option<f64>) -> Result<KdeCurve> {
    let probe = kde(sample, &[], bandwidth)?;
    let grid = padded_grid(sample, probe.bandwidth, 5.0, 512);
    kde(sample, &grid, Some(probe.bandwidth))
}

/// Trapezoid-rule integral of a curve.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_kernel() {
        let c = kde(&[0.0], &[0.0], Some(1.0)).unwrap();
        assert!((c.density[0] - 0.39894).abs() < 1e-5);
        assert!(kde(&[0.0], &[0.0], None).is_err());
        assert!(kde(&[0.0, 1.0], &[0.0], Some(0.0)).is_err());
    }

    #[test]
    fn mass_is_one() {
        let s: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
        let c = kde_auto(&s, None).unwrap();
        assert!((trapezoid(&c.x, &c.density) - 1.0).abs() < 0.01);
    }

    #[test]
    fn constant_sample_falls_back() {
        let h = default_bandwidth(&[3.0; 10]);
        assert!((h - 3e-3).abs() < 1e-15);
        let c = kde_auto(&[3.0; 10], None).unwrap();
        assert!((trapezoid(&c.x, &c.density) - 1.0).abs() < 0.01);
    }

    #[test]
    fn silverman_value() {
        let s = [1.0, 2.0, 3.0, 4.0];
        let sd = (5.0f64 / 3.0).sqrt();
        let expect = 0.9 * sd.min(1.5 / 1.34) * 4f64.powf(-0.2);
        assert!((silverman_bandwidth(&s) - expect).abs() < 1e-15);
    }
}
