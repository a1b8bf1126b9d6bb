//! Exposure study: how risk moves as descriptors are perturbed harder.

use serde::Serialize;

use super::pipeline::{run_records, Pipeline, RunOptions};
use super::record::{RiskRecord, Variant};
use crate::backends::Backend;
use crate::descriptors::{ExposureLevel, FirmwareDescriptor};
use crate::stats::{self, PairwiseComparison, StatSummary, TestResult};
use crate::{Error, Result};

/// Per-row quantities summarized by level.
pub const METRICS: [&str; 4] = ["r_cfg", "r_struct", "r_fusion", "p_final"];

/// Row quantities tested as predictors of `p_final`.
pub const PREDICTORS: [&str; 4] = ["e_global", "divergence", "e_mis", "entropy"];

pub fn metric(r: &RiskRecord, name: &str) -> f64 {
    match name {
        "r_cfg" => r.r_cfg,
        "r_struct" => r.r_struct,
        "r_fusion" => r.r_fusion,
        "p_final" => r.p_final,
        "p_fusion" => r.p_fusion,
        "e_global" => r.e_global,
        "divergence" => r.divergence,
        "e_mis" => r.e_mis,
        "entropy" => r.entropy,
        "psi" => r.psi,
        _ => f64::NAN,
    }
}

/// Row counts behind a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowAccounting {
    pub rows_total: usize,
    pub rows_included: usize,
    pub rows_excluded: usize,
}

impl RowAccounting {
    pub fn of<'a>(rows: impl IntoIterator<Item = &'a RiskRecord>) -> Self {
        let (mut total, mut excluded) = (0, 0);
        for r in rows {
            total += 1;
            excluded += usize::from(r.excluded);
        }
        RowAccounting {
            rows_total: total,
            rows_included: total - excluded,
            rows_excluded: excluded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: ExposureLevel,
    pub metric: &'static str,
    pub summary: StatSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelComparison {
    pub from: ExposureLevel,
    pub to: ExposureLevel,
    pub metric: &'static str,
    pub welch: TestResult,
    /// `(mean_to − mean_from) / mean_from`.
    pub relative_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorTest {
    pub predictor: &'static str,
    pub target: &'static str,
    pub pearson: TestResult,
    pub spearman: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExposureReport {
    pub accounting: RowAccounting,
    pub levels: Vec<ExposureLevel>,
    pub summaries: Vec<LevelSummary>,
    pub comparisons: Vec<LevelComparison>,
    /// One-way ANOVA across the three layer-risk populations.
    pub layer_anova: TestResult,
    pub layer_posthoc: Vec<PairwiseComparison>,
    pub predictors: Vec<PredictorTest>,
}

impl ExposureReport {
    pub fn comparison(&self, from: ExposureLevel, to: ExposureLevel, metric: &str) -> Option<&LevelComparison> {
        self.comparisons
            .iter()
            .find(|c| c.from == from && c.to == to && c.metric == metric)
    }

    pub fn predictor(&self, name: &str) -> Option<&PredictorTest> {
        self.predictors.iter().find(|p| p.predictor == name)
    }
}

fn column(rows: &[&RiskRecord], name: &str) -> Vec<f64> {
    rows.iter().map(|r| metric(r, name)).collect()
}

/// Statistics of the full-pipeline rows of `records`.
pub fn exposure_report(records: &[RiskRecord]) -> Result<ExposureReport> {
    let full: Vec<&RiskRecord> = records.iter().filter(|r| r.variant == Variant::Full).collect();
    let accounting = RowAccounting::of(full.iter().copied());
    let included: Vec<&RiskRecord> = full.into_iter().filter(|r| !r.excluded).collect();
    let mut levels: Vec<ExposureLevel> = included.iter().map(|r| r.exposure).collect();
    levels.sort();
    levels.dedup();
    if levels.len() < 2 {
        return Err(Error::Degenerate(
            "exposure study needs at least two exposure levels".into(),
        ));
    }
    let by_level: Vec<Vec<&RiskRecord>> = levels
        .iter()
        .map(|&l| included.iter().copied().filter(|r| r.exposure == l).collect())
        .collect();

    let mut summaries = Vec::new();
    for (&level, rows) in levels.iter().zip(&by_level) {
        for m in METRICS {
            summaries.push(LevelSummary {
                level,
                metric: m,
                summary: stats::summarize(&column(rows, m))?,
            });
        }
    }
    let mut comparisons = Vec::new();
    for k in 1..levels.len() {
        for m in METRICS {
            let x = column(&by_level[k - 1], m);
            let y = column(&by_level[k], m);
            let welch = if x == y {
                // identical populations (paired None vs None)
                TestResult {
                    kind: stats::TestKind::WelchT,
                    statistic: 0.0,
                    df: (x.len() + y.len()) as f64 - 2.0,
                    df2: None,
                    p_value: 1.0,
                }
            } else {
                stats::welch_t(&x, &y)?
            };
            let mx = stats::mean(&x);
            comparisons.push(LevelComparison {
                from: levels[k - 1],
                to: levels[k],
                metric: m,
                welch,
                relative_increase: (stats::mean(&y) - mx) / mx,
            });
        }
    }

    let layers: Vec<Vec<f64>> = METRICS[..3].iter().map(|m| column(&included, m)).collect();
    let groups: Vec<&[f64]> = layers.iter().map(Vec::as_slice).collect();
    let layer_anova = stats::anova_oneway(&groups)?;
    let layer_posthoc = stats::pairwise_welch_bonferroni(&groups)?;

    let target = column(&included, "p_final");
    let mut predictors = Vec::new();
    for name in PREDICTORS {
        let x = column(&included, name);
        predictors.push(PredictorTest {
            predictor: name,
            target: "p_final",
            pearson: stats::pearson(&x, &target)?,
            spearman: stats::spearman(&x, &target)?,
        });
    }
    Ok(ExposureReport {
        accounting,
        levels,
        summaries,
        comparisons,
        layer_anova,
        layer_posthoc,
        predictors,
    })
}

/// Runs the full pipeline at every level and summarizes it.
pub fn run_exposure_study(
    pl: &Pipeline,
    descriptors: &[FirmwareDescriptor],
    backend: &Backend,
    opts: &RunOptions,
) -> Result<(Vec<RiskRecord>, ExposureReport)> {
    if opts.levels.len() < 2 {
        return Err(Error::InvalidConfig(
            "exposure study needs at least two exposure levels".into(),
        ));
    }
    let opts = RunOptions {
        variants: vec![Variant::Full],
        ..opts.clone()
    };
    let records = run_records(pl, descriptors, backend, &opts)?;
    let report = exposure_report(&records)?;
    Ok((records, report))
}
