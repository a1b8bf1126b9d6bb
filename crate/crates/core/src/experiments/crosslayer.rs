//! Cross-layer study: distributions of the three layer risks and how they
//! co-vary.

use serde::Serialize;

use super::exposure::{metric, RowAccounting};
use super::record::{RiskRecord, Variant};
use crate::descriptors::ExposureLevel;
use crate::stats::{self, KdeCurve, StatSummary};
use crate::{Error, Result};

pub const LAYERS: [&str; 3] = ["r_cfg", "r_struct", "r_fusion"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub r: [[f64; 3]; 3],
    /// Fisher-z two-sided p-values.
    pub p: [[f64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSummary {
    pub layer: &'static str,
    pub summary: StatSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeGroup {
    pub layer: &'static str,
    /// `None` for the pooled curve.
    pub level: Option<ExposureLevel>,
    pub curve: KdeCurve,
}

impl KdeGroup {
    pub fn name(&self) -> String {
        match self.level {
            Some(l) => format!("{}_{}", self.layer, l.name()),
            None => format!("{}_all", self.layer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossLayerReport {
    pub accounting: RowAccounting,
    pub summaries: Vec<LayerSummary>,
    pub pearson: CorrelationMatrix,
    pub spearman: CorrelationMatrix,
    #[serde(skip)]
    pub kde: Vec<KdeGroup>,
}

type CorrFn = fn(&[f64], &[f64]) -> Result<stats::TestResult>;

fn matrix(cols: &[Vec<f64>], f: CorrFn) -> Result<CorrelationMatrix> {
    let mut m = CorrelationMatrix {
        r: [[1.0; 3]; 3],
        p: [[0.0; 3]; 3],
    };
    for i in 0..3 {
        for j in i + 1..3 {
            let t = f(&cols[i], &cols[j])?;
            m.r[i][j] = t.statistic;
            m.r[j][i] = t.statistic;
            m.p[i][j] = t.p_value;
            m.p[j][i] = t.p_value;
        }
    }
    Ok(m)
}

pub fn run_crosslayer_study(records: &[RiskRecord]) -> Result<CrossLayerReport> {
    let full: Vec<&RiskRecord> = records.iter().filter(|r| r.variant == Variant::Full).collect();
    let accounting = RowAccounting::of(full.iter().copied());
    let rows: Vec<&RiskRecord> = full.into_iter().filter(|r| !r.excluded).collect();
    if rows.len() < 4 {
        return Err(Error::Degenerate(format!(
            "cross-layer study needs at least 4 included rows, got {}",
            rows.len()
        )));
    }
    let cols: Vec<Vec<f64>> = LAYERS
        .iter()
        .map(|m| rows.iter().map(|r| metric(r, m)).collect())
        .collect();
    let summaries = LAYERS
        .iter()
        .zip(&cols)
        .map(|(&layer, c)| Ok(LayerSummary { layer, summary: stats::summarize(c)? }))
        .collect::<Result<Vec<_>>>()?;

    let mut levels: Vec<ExposureLevel> = rows.iter().map(|r| r.exposure).collect();
    levels.sort();
    levels.dedup();
    let mut kde = Vec::new();
    for (&layer, col) in LAYERS.iter().zip(&cols) {
        kde.push(KdeGroup {
            layer,
            level: None,
            curve: stats::kde_auto(col, None)?,
        });
        if levels.len() > 1 {
            for &l in &levels {
                let sample: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.exposure == l)
                    .map(|r| metric(r, layer))
                    .collect();
                if sample.len() >= 2 {
                    kde.push(KdeGroup {
                        layer,
                        level: Some(l),
                        curve: stats::kde_auto(&sample, None)?,
                    });
                }
            }
        }
    }
    Ok(CrossLayerReport {
        accounting,
        summaries,
        pearson: matrix(&cols, stats::pearson)?,
        spearman: matrix(&cols, stats::spearman)?,
        kde,
    })
}
