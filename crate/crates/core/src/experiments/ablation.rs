//! Ablation study: the full pipeline against variants with one part removed
//! and against a single affine model.
//!
//! Per variant the report gives the change of three means relative to the
//! full pipeline: mean pair divergence (over the pairs the variant defines),
//! mean uncertainty (over the layers present) and mean `p_final`.

use serde::Serialize;

use super::exposure::RowAccounting;
use super::pipeline::{run_records, Pipeline, RunOptions};
use super::record::{mean_defined, RiskRecord, Variant};
use crate::backends::Backend;
use crate::descriptors::FirmwareDescriptor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub n: usize,
    pub mean_divergence: f64,
    pub mean_uncertainty: f64,
    pub mean_p_final: f64,
    pub divergence_change_pct: f64,
    pub uncertainty_change_pct: f64,
    pub risk_shift_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub accounting: RowAccounting,
    pub rows: Vec<AblationRow>,
}

/// Variants in the order of increasing expected impact.
pub const IMPACT_ORDER: [Variant; 4] = [
    Variant::NoConfig,
    Variant::NoStructure,
    Variant::NoFusion,
    Variant::Shallow,
];

fn pct(x: f64, base: f64) -> f64 {
    100.0 * (x / base - 1.0)
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    fn strictly_increasing(&self, f: impl Fn(&AblationRow) -> f64) -> bool {
        let vals: Option<Vec<f64>> = IMPACT_ORDER.iter().map(|&v| self.row(v).map(&f)).collect();
        vals.is_some_and(|v| v.windows(2).all(|w| w[0] < w[1]))
    }

    /// Shallow > NoFusion > NoStructure > NoConfig in divergence change.
    pub fn divergence_order_holds(&self) -> bool {
        self.strictly_increasing(|r| r.divergence_change_pct)
    }

    /// Same order in the magnitude of the risk shift.
    pub fn risk_shift_order_holds(&self) -> bool {
        self.strictly_increasing(|r| r.risk_shift_pct.abs())
    }
}

pub fn ablation_report(records: &[RiskRecord]) -> Result<AblationReport> {
    let accounting = RowAccounting::of(records);
    let means = |v: Variant| {
        let rows: Vec<&RiskRecord> = records
            .iter()
            .filter(|r| r.variant == v && !r.excluded)
            .collect();
        let m = |f: &dyn Fn(&RiskRecord) -> f64| mean_defined(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        (
            rows.len(),
            m(&|r| r.mean_pair_divergence()),
            m(&|r| r.mean_uncertainty()),
            m(&|r| r.p_final),
        )
    };
    let (n_full, d0, u0, p0) = means(Variant::Full);
    if n_full == 0 {
        return Err(Error::Degenerate(
            "ablation needs included rows of the full pipeline".into(),
        ));
    }
    let rows = Variant::ALL
        .iter()
        .filter_map(|&v| {
            let (n, d, u, p) = means(v);
            (n > 0).then(|| AblationRow {
                variant: v,
                n,
                mean_divergence: d,
                mean_uncertainty: u,
                mean_p_final: p,
                divergence_change_pct: pct(d, d0),
                uncertainty_change_pct: pct(u, u0),
                risk_shift_pct: pct(p, p0),
            })
        })
        .collect();
    Ok(AblationReport { accounting, rows })
}

/// Runs every variant (the full pipeline always included) and compares them.
pub fn run_ablation(
    pl: &Pipeline,
    descriptors: &[FirmwareDescriptor],
    backend: &Backend,
    opts: &RunOptions,
) -> Result<(Vec<RiskRecord>, AblationReport)> {
    let mut variants = opts.variants.clone();
    if !variants.contains(&Variant::Full) {
        variants.insert(0, Variant::Full);
    }
    let opts = RunOptions {
        variants,
        ..opts.clone()
    };
    let records = run_records(pl, descriptors, backend, &opts)?;
    let report = ablation_report(&records)?;
    Ok((records, report))
}
