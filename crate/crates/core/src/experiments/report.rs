//! Report directory layout.
//!
//! Summary tables are comma-separated with a header row, test results go to
//! `tests.json`, and each KDE curve is a two-column `kde_<group>.csv`.

use std::path::Path;

use serde::Serialize;

use super::ablation::AblationReport;
use super::crosslayer::{CrossLayerReport, LAYERS};
use super::exposure::{ExposureReport, RowAccounting};
use crate::stats::StatSummary;
use crate::{files, Result};

const SUMMARY_HEADER: [&str; 11] = [
    "n",
    "mean",
    "std",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "iqr",
    "skewness",
    "kurtosis_excess",
];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn summary_fields(s: &StatSummary) -> Vec<String> {
    vec![
        s.n.to_string(),
        s.mean.to_string(),
        s.std.to_string(),
        s.min.to_string(),
        s.q1.to_string(),
        s.median.to_string(),
        s.q3.to_string(),
        s.max.to_string(),
        s.iqr.to_string(),
        opt(s.skewness),
        opt(s.kurtosis_excess),
    ]
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner()
        .map_err(|e| crate::Error::MalformedRecords(e.to_string()))
}

fn with_summary_header(prefix: &[&'static str]) -> Vec<&'static str> {
    let mut h = prefix.to_vec();
    h.extend_from_slice(&SUMMARY_HEADER);
    h
}

#[derive(Serialize)]
struct TestsDoc<'a> {
    exposure: Option<ExposureTests<'a>>,
    crosslayer: Option<CrossLayerTests<'a>>,
    ablation: Option<&'a AblationReport>,
}

#[derive(Serialize)]
struct ExposureTests<'a> {
    accounting: RowAccounting,
    comparisons: &'a [super::exposure::LevelComparison],
    layer_anova: &'a crate::stats::TestResult,
    layer_posthoc: &'a [crate::stats::PairwiseComparison],
    predictors: &'a [super::exposure::PredictorTest],
}

#[derive(Serialize)]
struct CrossLayerTests<'a> {
    accounting: RowAccounting,
    layers: [&'static str; 3],
    pearson: &'a super::crosslayer::CorrelationMatrix,
    spearman: &'a super::crosslayer::CorrelationMatrix,
}

pub fn write_exposure(dir: &Path, r: &ExposureReport) -> Result<()> {
    let rows = r.summaries.iter().map(|s| {
        let mut v = vec![s.level.name().to_string(), s.metric.to_string()];
        v.extend(summary_fields(&s.summary));
        v
    });
    files::write_atomic(
        &dir.join("exposure_summary.csv"),
        &table(&with_summary_header(&["level", "metric"]), rows)?,
    )?;
    let rows = r.comparisons.iter().map(|c| {
        vec![
            c.from.name().to_string(),
            c.to.name().to_string(),
            c.metric.to_string(),
            c.welch.statistic.to_string(),
            c.welch.df.to_string(),
            c.welch.p_value.to_string(),
            c.relative_increase.to_string(),
        ]
    });
    files::write_atomic(
        &dir.join("exposure_welch.csv"),
        &table(
            &["from", "to", "metric", "t", "df", "p_value", "relative_increase"],
            rows,
        )?,
    )
}

pub fn write_crosslayer(dir: &Path, r: &CrossLayerReport) -> Result<()> {
    let rows = r.summaries.iter().map(|s| {
        let mut v = vec![s.layer.to_string()];
        v.extend(summary_fields(&s.summary));
        v
    });
    files::write_atomic(
        &dir.join("crosslayer_summary.csv"),
        &table(&with_summary_header(&["layer"]), rows)?,
    )?;
    let mut rows = Vec::new();
    for (name, m) in [("pearson", &r.pearson), ("spearman", &r.spearman)] {
        for i in 0..3 {
            for j in 0..3 {
                rows.push(vec![
                    name.to_string(),
                    LAYERS[i].to_string(),
                    LAYERS[j].to_string(),
                    m.r[i][j].to_string(),
                    m.p[i][j].to_string(),
                ]);
            }
        }
    }
    files::write_atomic(
        &dir.join("correlations.csv"),
        &table(&["method", "layer_a", "layer_b", "r", "p_value"], rows)?,
    )?;
    for g in &r.kde {
        let rows = g
            .curve
            .x
            .iter()
            .zip(&g.curve.density)
            .map(|(x, d)| vec![x.to_string(), d.to_string()]);
        files::write_atomic(
            &dir.join(format!("kde_{}.csv", g.name())),
            &table(&["x", "density"], rows)?,
        )?;
    }
    Ok(())
}

pub fn write_ablation(dir: &Path, r: &AblationReport) -> Result<()> {
    let rows = r.rows.iter().map(|a| {
        vec![
            a.variant.name().to_string(),
            a.n.to_string(),
            a.mean_divergence.to_string(),
            a.mean_uncertainty.to_string(),
            a.mean_p_final.to_string(),
            a.divergence_change_pct.to_string(),
            a.uncertainty_change_pct.to_string(),
            a.risk_shift_pct.to_string(),
        ]
    });
    files::write_atomic(
        &dir.join("ablation.csv"),
        &table(
            &[
                "variant",
                "n",
                "mean_divergence",
                "mean_uncertainty",
                "mean_p_final",
                "divergence_change_pct",
                "uncertainty_change_pct",
                "risk_shift_pct",
            ],
            rows,
        )?,
    )
}

/// Writes whichever reports are present plus a combined `tests.json`.
pub fn write_report_dir(
    dir: &Path,
    exposure: Option<&ExposureReport>,
    crosslayer: Option<&CrossLayerReport>,
    ablation: Option<&AblationReport>,
) -> Result<()> {
    files::create_dir_all(dir)?;
    if let Some(r) = exposure {
        write_exposure(dir, r)?;
    }
    if let Some(r) = crosslayer {
        write_crosslayer(dir, r)?;
    }
    if let Some(r) = ablation {
        write_ablation(dir, r)?;
    }
    let doc = TestsDoc {
        exposure: exposure.map(|r| ExposureTests {
            accounting: r.accounting,
            comparisons: &r.comparisons,
            layer_anova: &r.layer_anova,
            layer_posthoc: &r.layer_posthoc,
            predictors: &r.predictors,
        }),
        crosslayer: crosslayer.map(|r| CrossLayerTests {
            accounting: r.accounting,
            layers: LAYERS,
            pearson: &r.pearson,
            spearman: &r.spearman,
        }),
        ablation,
    };
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    files::write_atomic(&dir.join("tests.json"), json.as_bytes())
}
