//! Per-row records and the records file.
//!
//! One row per (instance, exposure level, variant). Columns are fixed and
//! listed in [`COLUMNS`]; a NaN is written as an empty field, meaning "not
//! defined for this variant" (an absent layer, a missing pair).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::descriptors::ExposureLevel;
use crate::{files, Error, Result};

/// Which parts of the pipeline are active for a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoConfig,
    NoStructure,
    NoFusion,
    Shallow,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoConfig,
        Variant::NoStructure,
        Variant::NoFusion,
        Variant::Shallow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoConfig => "no_config",
            Variant::NoStructure => "no_structure",
            Variant::NoFusion => "no_fusion",
            Variant::Shallow => "shallow",
        }
    }

    /// Layers whose risk enters the aggregate: config, structure, fusion.
    /// The shallow model's single head occupies the fusion slot.
    pub fn risk_layers(self) -> [bool; 3] {
        match self {
            Variant::Full => [true, true, true],
            Variant::NoConfig => [false, true, true],
            Variant::NoStructure => [true, false, true],
            Variant::NoFusion => [true, true, false],
            Variant::Shallow => [false, false, true],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "ablation variant",
                value: s.into(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskRecord {
    pub instance_id: u64,
    pub exposure: ExposureLevel,
    pub variant: Variant,
    /// Display risks on `[0, risk_scale]`.
    pub r_cfg: f64,
    pub r_struct: f64,
    pub r_fusion: f64,
    pub r1_raw: f64,
    pub r2_raw: f64,
    pub p_fusion: f64,
    pub p_final: f64,
    pub divergence: f64,
    /// Ordered pair divergences `D_12, D_13, D_21, D_23, D_31, D_32`.
    pub pairwise: [f64; 6],
    pub entropy: f64,
    pub e_mis: f64,
    pub e_weighted: f64,
    pub psi: f64,
    pub r_theory: f64,
    pub r_protocol: f64,
    pub e_global: f64,
    pub e_layers: [f64; 3],
    /// Rows of the complexity matrix: latency, cpu, gpu, tokens.
    pub costs: [[f64; 4]; 3],
    pub uncertainty: [f64; 3],
    pub depth: [Option<u32>; 3],
    pub wall_ms: [f64; 3],
    pub stable_fraction: f64,
    pub stable_fraction_stated: f64,
    pub retries: u32,
    pub backend_failure: bool,
    pub excluded: bool,
    pub signature: String,
}

pub const PAIR_NAMES: [&str; 6] = ["d12", "d13", "d21", "d23", "d31", "d32"];

pub const COLUMNS: [&str; 54] = [
    "instance_id",
    "exposure",
    "variant",
    "r_cfg",
    "r_struct",
    "r_fusion",
    "r1_raw",
    "r2_raw",
    "p_fusion",
    "p_final",
    "divergence",
    "d12",
    "d13",
    "d21",
    "d23",
    "d31",
    "d32",
    "entropy",
    "e_mis",
    "e_weighted",
    "psi",
    "r_theory",
    "r_protocol",
    "e_global_mj",
    "e1_mj",
    "e2_mj",
    "e3_mj",
    "lat1_ms",
    "cpu1_pct",
    "gpu1_pct",
    "tok1",
    "lat2_ms",
    "cpu2_pct",
    "gpu2_pct",
    "tok2",
    "lat3_ms",
    "cpu3_pct",
    "gpu3_pct",
    "tok3",
    "u1",
    "u2",
    "u3",
    "depth1",
    "depth2",
    "depth3",
    "wall1_ms",
    "wall2_ms",
    "wall3_ms",
    "stable_fraction",
    "stable_fraction_stated",
    "retries",
    "backend_failure",
    "excluded",
    "signature",
];

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn parse_f64(s: &str, col: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::MalformedRecords(format!("column {col}: bad number {s:?}")))
}

fn parse_field<T: FromStr>(s: &str, col: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::MalformedRecords(format!("column {col}: bad value {s:?}")))
}

impl RiskRecord {
    /// The numeric risk of layer `j` in `0..3` (display scale).
    pub fn layer_risk(&self, j: usize) -> f64 {
        [self.r_cfg, self.r_struct, self.r_fusion][j]
    }

    /// Mean of the defined pair divergences, NaN when none is defined.
    pub fn mean_pair_divergence(&self) -> f64 {
        mean_defined(&self.pairwise)
    }

    /// Mean uncertainty across the layers present in the row.
    pub fn mean_uncertainty(&self) -> f64 {
        mean_defined(&self.uncertainty)
    }

    pub fn to_fields(&self) -> Vec<String> {
        let mut v = Vec::with_capacity(COLUMNS.len());
        v.push(self.instance_id.to_string());
        v.push(self.exposure.name().into());
        v.push(self.variant.name().into());
        for x in [
            self.r_cfg,
            self.r_struct,
            self.r_fusion,
            self.r1_raw,
            self.r2_raw,
            self.p_fusion,
            self.p_final,
            self.divergence,
        ] {
            v.push(fmt_f64(x));
        }
        v.extend(self.pairwise.iter().map(|&x| fmt_f64(x)));
        for x in [
            self.entropy,
            self.e_mis,
            self.e_weighted,
            self.psi,
            self.r_theory,
            self.r_protocol,
            self.e_global,
        ] {
            v.push(fmt_f64(x));
        }
        v.extend(self.e_layers.iter().map(|&x| fmt_f64(x)));
        v.extend(self.costs.iter().flatten().map(|&x| fmt_f64(x)));
        v.extend(self.uncertainty.iter().map(|&x| fmt_f64(x)));
        v.extend(
            self.depth
                .iter()
                .map(|d| d.map_or_else(String::new, |d| d.to_string())),
        );
        v.extend(self.wall_ms.iter().map(|&x| fmt_f64(x)));
        v.push(fmt_f64(self.stable_fraction));
        v.push(fmt_f64(self.stable_fraction_stated));
        v.push(self.retries.to_string());
        v.push(self.backend_failure.to_string());
        v.push(self.excluded.to_string());
        v.push(self.signature.clone());
        debug_assert_eq!(v.len(), COLUMNS.len());
        v
    }

    pub fn from_fields(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != COLUMNS.len() {
            return Err(Error::MalformedRecords(format!(
                "expected {} columns, found {}",
                COLUMNS.len(),
                row.len()
            )));
        }
        let f = |i: usize| parse_f64(&row[i], COLUMNS[i]);
        let arr3 = |start: usize| -> Result<[f64; 3]> { Ok([f(start)?, f(start + 1)?, f(start + 2)?]) };
        let depth = |i: usize| -> Result<Option<u32>> {
            if row[i].is_empty() {
                Ok(None)
            } else {
                parse_field(&row[i], COLUMNS[i]).map(Some)
            }
        };
        let mut pairwise = [0.0; 6];
        for (k, p) in pairwise.iter_mut().enumerate() {
            *p = f(11 + k)?;
        }
        let mut costs = [[0.0; 4]; 3];
        for (j, row_c) in costs.iter_mut().enumerate() {
            for (k, c) in row_c.iter_mut().enumerate() {
                *c = f(27 + 4 * j + k)?;
            }
        }
        Ok(RiskRecord {
            instance_id: parse_field(&row[0], COLUMNS[0])?,
            exposure: parse_field(&row[1], COLUMNS[1])?,
            variant: parse_field(&row[2], COLUMNS[2])?,
            r_cfg: f(3)?,
            r_struct: f(4)?,
            r_fusion: f(5)?,
            r1_raw: f(6)?,
            r2_raw: f(7)?,
            p_fusion: f(8)?,
            p_final: f(9)?,
            divergence: f(10)?,
            pairwise,
            entropy: f(17)?,
            e_mis: f(18)?,
            e_weighted: f(19)?,
            psi: f(20)?,
            r_theory: f(21)?,
            r_protocol: f(22)?,
            e_global: f(23)?,
            e_layers: arr3(24)?,
            costs,
            uncertainty: arr3(39)?,
            depth: [depth(42)?, depth(43)?, depth(44)?],
            wall_ms: arr3(45)?,
            stable_fraction: f(48)?,
            stable_fraction_stated: f(49)?,
            retries: parse_field(&row[50], COLUMNS[50])?,
            backend_failure: parse_field(&row[51], COLUMNS[51])?,
            excluded: parse_field(&row[52], COLUMNS[52])?,
            signature: row[53].to_string(),
        })
    }
}

pub(crate) fn mean_defined(x: &[f64]) -> f64 {
    let (s, n) = x
        .iter()
        .filter(|v| !v.is_nan())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn format_records(records: &[RiskRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(r.to_fields())?;
    }
    w.into_inner()
        .map_err(|e| Error::MalformedRecords(e.to_string()))
}

pub fn parse_records(bytes: &[u8]) -> Result<Vec<RiskRecord>> {
    let mut rd = csv::Reader::from_reader(bytes);
    let header = rd.headers()?.clone();
    if header.iter().ne(COLUMNS.iter().copied()) {
        return Err(Error::MalformedRecords("unexpected header row".into()));
    }
    rd.records()
        .map(|row| RiskRecord::from_fields(&row?))
        .collect()
}

pub fn write_records(path: &Path, records: &[RiskRecord]) -> Result<()> {
    files::write_atomic(path, &format_records(records)?)
}

pub fn read_records(path: &Path) -> Result<Vec<RiskRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_records(&bytes)
}
