//! Directional checks of a parameter set on a seeded synthetic population:
//! the exposure, cross-layer and ablation findings the model is expected to
//! reproduce in direction, not in exact value.

use serde::Serialize;

use super::ablation::{ablation_report, AblationReport};
use super::crosslayer::{run_crosslayer_study, CrossLayerReport};
use super::exposure::{exposure_report, ExposureReport};
use super::pipeline::{run_records, Pipeline, RunOptions};
use super::record::{RiskRecord, Variant};
use crate::backends::Backend;
use crate::descriptors::{ExposureLevel, Generator};
use crate::params::ParamsFile;
use crate::Result;

/// Range accepted for the Medium to High relative increase of mean `p_final`.
pub const RELATIVE_INCREASE_RANGE: (f64, f64) = (0.15, 0.40);
pub const LEVEL_P_MAX: f64 = 1e-3;
pub const ANOVA_P_MAX: f64 = 1e-2;
pub const CORRELATION_P_MAX: f64 = 1e-2;
/// Band for the configuration against fusion display risk correlation.
pub const CONFIG_FUSION_BAND: (f64, f64) = (0.23, 0.77);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
}

impl Correlation {
    pub fn positive_significant(&self) -> bool {
        self.r > 0.0 && self.p < CORRELATION_P_MAX
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionalCheck {
    pub n: usize,
    pub seed: u64,
    pub relative_increase: f64,
    /// Welch p-values of r_cfg, r_struct, r_fusion, Medium against High.
    pub level_p: [f64; 3],
    pub anova_p: f64,
    /// Layer pairs (cfg, struct), (cfg, fusion), (struct, fusion).
    pub layer_correlations: [Correlation; 3],
    pub energy_correlation: Correlation,
    pub divergence_correlation: Correlation,
    /// Divergence change in percent for NoConfig, NoStructure, NoFusion, Shallow.
    pub divergence_changes: [f64; 4],
    /// Risk shift in percent, same order.
    pub risk_shifts: [f64; 4],
    pub divergence_order: bool,
    pub risk_shift_order: bool,
}

impl DirectionalCheck {
    pub fn exposure_holds(&self) -> bool {
        let (lo, hi) = RELATIVE_INCREASE_RANGE;
        (lo..=hi).contains(&self.relative_increase)
            && self.level_p.iter().all(|&p| p < LEVEL_P_MAX)
            && self.anova_p < ANOVA_P_MAX
            && self.layer_correlations.iter().all(Correlation::positive_significant)
            && self.energy_correlation.positive_significant()
            && self.divergence_correlation.positive_significant()
    }

    pub fn config_fusion_in_band(&self) -> bool {
        let (lo, hi) = CONFIG_FUSION_BAND;
        (lo..=hi).contains(&self.layer_correlations[1].r)
    }

    pub fn ablation_holds(&self) -> bool {
        self.divergence_order && self.risk_shift_order
    }

    pub fn holds(&self) -> bool {
        self.exposure_holds() && self.ablation_holds()
    }
}

/// The reports behind a check.
pub struct CheckReports {
    pub records: Vec<RiskRecord>,
    pub exposure: ExposureReport,
    pub crosslayer: CrossLayerReport,
    pub ablation: AblationReport,
}

pub fn reports(params: &ParamsFile, n: usize, seed: u64, workers: usize) -> Result<CheckReports> {
    let ds = Generator::new(params.population.generator(n, seed))?.generate();
    let pl = Pipeline::new(params.clone());
    let opts = RunOptions {
        levels: vec![ExposureLevel::Medium, ExposureLevel::High],
        variants: Variant::ALL.to_vec(),
        seed,
        workers,
        ..RunOptions::default()
    };
    let records = run_records(&pl, &ds, &Backend::Synthetic, &opts)?;
    Ok(CheckReports {
        exposure: exposure_report(&records)?,
        crosslayer: run_crosslayer_study(&records)?,
        ablation: ablation_report(&records)?,
        records,
    })
}

pub fn check_reports(r: &CheckReports, n: usize, seed: u64) -> DirectionalCheck {
    use ExposureLevel::{High, Medium};
    let cmp = |m: &str| r.exposure.comparison(Medium, High, m);
    let level_p = ["r_cfg", "r_struct", "r_fusion"].map(|m| cmp(m).map_or(f64::NAN, |c| c.welch.p_value));
    let pr = &r.crosslayer.pearson;
    let corr = |i: usize, j: usize| Correlation {
        r: pr.r[i][j],
        p: pr.p[i][j],
    };
    let pred = |name: &str| {
        r.exposure.predictor(name).map_or(
            Correlation {
                r: f64::NAN,
                p: f64::NAN,
            },
            |t| Correlation {
                r: t.pearson.statistic,
                p: t.pearson.p_value,
            },
        )
    };
    let per_variant = |f: fn(&super::ablation::AblationRow) -> f64| {
        super::ablation::IMPACT_ORDER.map(|v| r.ablation.row(v).map_or(f64::NAN, f))
    };
    DirectionalCheck {
        n,
        seed,
        relative_increase: cmp("p_final").map_or(f64::NAN, |c| c.relative_increase),
        level_p,
        anova_p: r.exposure.layer_anova.p_value,
        layer_correlations: [corr(0, 1), corr(0, 2), corr(1, 2)],
        energy_correlation: pred("e_global"),
        divergence_correlation: pred("divergence"),
        divergence_changes: per_variant(|a| a.divergence_change_pct),
        risk_shifts: per_variant(|a| a.risk_shift_pct),
        divergence_order: r.ablation.divergence_order_holds(),
        risk_shift_order: r.ablation.risk_shift_order_holds(),
    }
}

/// Runs every variant at Medium and High on `n` generated descriptors and
/// evaluates the directional findings.
pub fn directional_check(params: &ParamsFile, n: usize, seed: u64, workers: usize) -> Result<DirectionalCheck> {
    Ok(check_reports(&reports(params, n, seed, workers)?, n, seed))
}
