//! Parameter files: model parameters, cost coefficients and the population
//! they were calibrated against, stored as one JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::DEFAULT_PAIR_WEIGHTS;
use crate::cost_model::CostCoefficients;
use crate::descriptors::GeneratorConfig;
use crate::reasoner::{Dims, InitOptions, ModelParams};
use crate::{files, Error, Result};

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

/// Name under which the bundled calibration can be requested instead of a path.
pub const BUNDLED_NAME: &str = "paper-2025";

const BUNDLED: &str = include_str!("../data/paper-2025.json");

/// Synthetic population the parameters were tuned on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub k_c: usize,
    pub k_o: usize,
    /// Diagonal of both baseline covariances.
    pub baseline_variance: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            k_c: 16,
            k_o: 16,
            baseline_variance: 0.05,
        }
    }
}

impl PopulationSpec {
    pub fn generator(&self, n: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig::isotropic(n, seed, self.k_c, self.k_o, self.baseline_variance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub schema_version: u32,
    pub name: String,
    pub param_seed: u64,
    pub init: InitOptions,
    pub population: PopulationSpec,
    pub model: ModelParams,
    pub costs: CostCoefficients,
    #[serde(default = "default_pair_weights")]
    pub pair_weights: [f64; 3],
}

fn default_pair_weights() -> [f64; 3] {
    DEFAULT_PAIR_WEIGHTS
}

impl ParamsFile {
    /// Seeded parameters with neutral coefficients.
    pub fn seeded(name: &str, param_seed: u64, dims: Dims, init: InitOptions) -> Result<Self> {
        Ok(ParamsFile {
            schema_version: PARAMS_SCHEMA_VERSION,
            name: name.into(),
            param_seed,
            init,
            population: PopulationSpec {
                k_c: dims.k_c,
                k_o: dims.k_o,
                ..Default::default()
            },
            model: ModelParams::seeded(param_seed, dims, init)?,
            costs: CostCoefficients::default(),
            pair_weights: DEFAULT_PAIR_WEIGHTS,
        })
    }

    /// The calibration shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled parameter file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ParamsFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedParams(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PARAMS_SCHEMA_VERSION {
            return Err(Error::MalformedParams(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        self.model.validate()?;
        self.costs.validate()?;
        let d = self.model.dims();
        if d.k_c != self.population.k_c || d.k_o != self.population.k_o {
            return Err(Error::MalformedParams(
                "population dimensions disagree with the model".into(),
            ));
        }
        if !(self.population.baseline_variance >= 0.0) {
            return Err(Error::MalformedParams("baseline variance must be nonnegative".into()));
        }
        if self.pair_weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::MalformedParams("pair weights must be nonnegative".into()));
        }
        Ok(())
    }

    /// Loads `source`, which is either [`BUNDLED_NAME`] or a file path.
    pub fn load(source: &str) -> Result<Self> {
        if source == BUNDLED_NAME {
            return Ok(Self::bundled());
        }
        Self::from_json(&files::read_to_string(Path::new(source))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        files::write_atomic(path, self.to_json().as_bytes())
    }
}
