//! The exposure, cross-layer and ablation studies, the calibration search and
//! report writing.

pub mod ablation;
pub mod calibrate;
pub mod check;
pub mod crosslayer;
pub mod exposure;
pub mod pipeline;
pub mod record;
pub mod report;
pub mod shallow;

pub use ablation::{ablation_report, run_ablation, AblationReport, AblationRow};
pub use check::{directional_check, DirectionalCheck};
pub use crosslayer::{run_crosslayer_study, CrossLayerReport};
pub use exposure::{exposure_report, run_exposure_study, ExposureReport, RowAccounting};
pub use pipeline::{run_features, run_records, score, Features, Pipeline, RunOptions, Scores};
pub use record::{read_records, write_records, RiskRecord, Variant};
