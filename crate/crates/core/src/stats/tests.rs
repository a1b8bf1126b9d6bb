//! Hypothesis tests: Welch's t, one-way ANOVA, Pearson and Spearman
//! correlation with Fisher-z significance.

use serde::Serialize;

use super::descriptive::{mean, variance};
use super::special::{f_upper, normal_two_sided, t_two_sided};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestKind {
    WelchT,
    AnovaF,
    PearsonR,
    SpearmanR,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    /// Degrees of freedom; for ANOVA the between-group value.
    pub df: f64,
    /// Within-group degrees of freedom for ANOVA.
    pub df2: Option<f64>,
    pub p_value: f64,
}

fn check_sample(name: &str, x: &[f64], min: usize) -> Result<()> {
    if x.len() < min {
        return Err(Error::Degenerate(format!(
            "{name} needs at least {min} values, got {}",
            x.len()
        )));
    }
    Error::check_finite("test sample", x)
}

/// Welch's unequal-variance t-test. The statistic is `(ȳ − x̄)/se`, so a
/// positive value means `y` has the larger mean.
pub fn welch_t(x: &[f64], y: &[f64]) -> Result<TestResult> {
    check_sample("welch_t", x, 2)?;
    check_sample("welch_t", y, 2)?;
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let a = variance(x) / n1;
    let b = variance(y) / n2;
    let se2 = a + b;
    if !(se2 > 0.0) {
        return Err(Error::Degenerate("both samples are constant".into()));
    }
    let t = (mean(y) - mean(x)) / se2.sqrt();
    let df = se2 * se2 / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
    Ok(TestResult {
        kind: TestKind::WelchT,
        statistic: t,
        df,
        df2: None,
        p_value: t_two_sided(t, df),
    })
}

/// One-way ANOVA, `F = MS_between / MS_within` with `(k − 1, N − k)` df.
pub fn anova_oneway(groups: &[&[f64]]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::Degenerate("ANOVA needs at least 2 groups".into()));
    }
    for g in groups {
        check_sample("anova group", g, 2)?;
    }
    let k = groups.len() as f64;
    let total_n: usize = groups.iter().map(|g| g.len()).sum();
    let n = total_n as f64;
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let (df1, df2) = (k - 1.0, n - k);
    let ms_between = ss_between / df1;
    let ms_within = ss_within / df2;
    if ms_within == 0.0 && ms_between == 0.0 {
        return Err(Error::Degenerate("all observations are equal".into()));
    }
    let f = if ms_within == 0.0 {
        f64::INFINITY
    } else {
        ms_between / ms_within
    };
    Ok(TestResult {
        kind: TestKind::AnovaF,
        statistic: f,
        df: df1,
        df2: Some(df2),
        p_value: f_upper(f, df1, df2),
    })
}

fn correlation_coefficient(x: &[f64], y: &[f64]) -> Result<f64> {
    Error::check_len("correlation", x.len(), y.len())?;
    check_sample("correlation", x, 3)?;
    Error::check_finite("correlation sample", y)?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant sample".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a correlation via Fisher's z-transform,
/// `z = atanh(r)`, `σ_z = 1/√(n − 3)`. With `n ≤ 3` the transform has no
/// spread estimate and `p = 1` is reported.
pub fn fisher_z_p(r: f64, n: usize) -> f64 {
    if n <= 3 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let z = r.atanh();
    normal_two_sided(z * ((n - 3) as f64).sqrt())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<TestResult> {
    let r = correlation_coefficient(x, y)?;
    Ok(TestResult {
        kind: TestKind::PearsonR,
        statistic: r,
        df: x.len() as f64 - 2.0,
        df2: None,
        p_value: fisher_z_p(r, x.len()),
    })
}

/// Ranks starting at 1, ties receiving the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult> {
    Error::check_len("correlation", x.len(), y.len())?;
    let r = correlation_coefficient(&average_ranks(x), &average_ranks(y))?;
    Ok(TestResult {
        kind: TestKind::SpearmanR,
        statistic: r,
        df: x.len() as f64 - 2.0,
        df2: None,
        p_value: fisher_z_p(r, x.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairwiseComparison {
    pub i: usize,
    pub j: usize,
    pub test: TestResult,
    /// `min(1, p · m)` for `m` comparisons.
    pub p_bonferroni: f64,
}

/// Post-hoc pairwise Welch tests between all groups, Bonferroni-corrected.
pub fn pairwise_welch_bonferroni(groups: &[&[f64]]) -> Result<Vec<PairwiseComparison>> {
    let k = groups.len();
    let m = (k * k.saturating_sub(1) / 2) as f64;
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let test = welch_t(groups[i], groups[j])?;
            out.push(PairwiseComparison {
                i,
                j,
                test,
                p_bonferroni: (test.p_value * m).min(1.0),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_hand_example() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r.statistic - 2.0 / (5.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((r.df - 50.0 / 17.0).abs() < 1e-13);
        let same = welch_t(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0]).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
        assert!(welch_t(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn anova_hand_example() {
        let r = anova_oneway(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        assert!((r.statistic - 13.5).abs() < 1e-12);
        assert_eq!((r.df, r.df2), (1.0, Some(4.0)));
        let same = anova_oneway(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
        assert!(anova_oneway(&[&[1.0, 2.0]]).is_err());
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap().statistic - 1.0).abs() < 1e-15);
        let y = [6.0, 4.0, 5.0];
        assert!((pearson(&x, &y).unwrap().statistic + 0.5).abs() < 1e-15);
        assert!((spearman(&x, &y).unwrap().statistic + 0.5).abs() < 1e-15);
        assert_eq!(pearson(&x, &y).unwrap().p_value, 1.0);
        assert!(pearson(&x, &[1.0, 1.0, 1.0]).is_err());
        assert!(pearson(&x, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn bonferroni_scales_p() {
        let g: [&[f64]; 3] = [&[1.0, 2.0, 3.0], &[2.0, 3.0, 5.0], &[7.0, 8.0, 8.5]];
        let c = pairwise_welch_bonferroni(&g).unwrap();
        assert_eq!(c.len(), 3);
        for p in c {
            assert!((p.p_bonferroni - (3.0 * p.test.p_value).min(1.0)).abs() < 1e-15);
        }
    }
}
