//! Symbolic per-layer cost indices, the complexity matrix, conceptual energy,
//! the energy-coupled aggregate risk and the final probability.
//!
//! Units are labels only: latency indices are "ms", CPU and GPU indices "%",
//! energies "MJ". Nothing here is a hardware measurement.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::reasoner::{sigmoid, LayerEmbeddings, ModelParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    /// Latency coefficients `τᵢ`.
    pub tau: [f64; 3],
    /// CPU coefficients `ζᵢ`.
    pub zeta: [f64; 3],
    /// GPU coefficients `ξᵢ`.
    pub gpu_coeff: [f64; 3],
    /// Token coefficients `νᵢ`.
    pub nu: [f64; 3],
    pub eta: f64,
    pub rho: f64,
    /// Layer weights `w` of the complexity vector `v = Cᵀw`.
    pub layer_weights: [f64; 3],
}

impl Default for CostCoefficients {
    fn default() -> Self {
        CostCoefficients {
            tau: [1.0; 3],
            zeta: [1.0; 3],
            gpu_coeff: [1.0; 3],
            nu: [1.0; 3],
            eta: 1.0,
            rho: 1e-3,
            layer_weights: [1.0; 3],
        }
    }
}

impl CostCoefficients {
    pub fn validate(&self) -> Result<()> {
        let all: Vec<f64> = [self.tau, self.zeta, self.gpu_coeff, self.nu, self.layer_weights]
            .concat();
        Error::check_finite("cost coefficients", &all)?;
        if all.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidConfig(
                "cost coefficients must be nonnegative".into(),
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) || !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig("eta and rho must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the complexity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LayerCost {
    pub latency: f64,
    pub cpu: f64,
    pub gpu: f64,
    pub tokens: f64,
}

impl LayerCost {
    pub fn as_row(&self) -> [f64; 4] {
        [self.latency, self.cpu, self.gpu, self.tokens]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostIndices {
    pub layers: [LayerCost; 3],
    /// `Cᵀw`, column order (latency, cpu, gpu, tokens).
    pub weighted: [f64; 4],
}

impl CostIndices {
    /// `C` as a 3×4 row-per-layer matrix.
    pub fn matrix(&self) -> [[f64; 4]; 3] {
        [
            self.layers[0].as_row(),
            self.layers[1].as_row(),
            self.layers[2].as_row(),
        ]
    }

    /// Column sums `(ℓ_tot, c_tot, g_tot, T_tot)`.
    pub fn totals(&self) -> [f64; 4] {
        let mut t = [0.0; 4];
        for l in &self.layers {
            for (acc, v) in t.iter_mut().zip(l.as_row()) {
                *acc += v;
            }
        }
        t
    }
}

/// `v = Cᵀw`.
pub fn weighted_vector(c: &[[f64; 4]; 3], w: [f64; 3]) -> [f64; 4] {
    let mut v = [0.0; 4];
    for (row, wi) in c.iter().zip(w) {
        for (acc, x) in v.iter_mut().zip(row) {
            *acc += wi * x;
        }
    }
    v
}

/// `ℓᵢ = τᵢ‖Wᵢ‖_F`, `cᵢ = ζᵢ‖hᵢ‖₁`, `gᵢ = ξᵢ‖hᵢ‖²`, `Tᵢ = νᵢ dim(hᵢ)`, with
/// `W3 = [A | B]`.
pub fn layer_costs(p: &ModelParams, emb: &LayerEmbeddings, coeff: &CostCoefficients) -> CostIndices {
    let norms = [p.w1.frobenius(), p.w2.frobenius(), p.fusion_weight_frobenius()];
    let hs = [&emb.h1, &emb.h2, &emb.h3];
    let layers = std::array::from_fn(|i| LayerCost {
        latency: coeff.tau[i] * norms[i],
        cpu: coeff.zeta[i] * linalg::norm_l1(hs[i]),
        gpu: coeff.gpu_coeff[i] * linalg::norm_sq(hs[i]),
        tokens: coeff.nu[i] * hs[i].len() as f64,
    });
    let mut idx = CostIndices {
        layers,
        weighted: [0.0; 4],
    };
    idx.weighted = weighted_vector(&idx.matrix(), coeff.layer_weights);
    idx
}

/// `E = ℓ_tot c_tot / (η + g_tot) + ρ T_tot`.
pub fn conceptual_energy_from(l: f64, c: f64, g: f64, t: f64, eta: f64, rho: f64) -> f64 {
    l * c / (eta + g) + rho * t
}

/// `(∂E/∂ℓ_tot, ∂E/∂c_tot)`.
pub fn conceptual_energy_partials(l: f64, c: f64, g: f64, eta: f64) -> (f64, f64) {
    (c / (eta + g), l / (eta + g))
}

pub fn conceptual_energy(idx: &CostIndices, coeff: &CostCoefficients) -> f64 {
    let [l, c, g, t] = idx.totals();
    conceptual_energy_from(l, c, g, t, coeff.eta, coeff.rho)
}

/// `E_j = ℓ_j c_j / (η + g_j) + ρ dim(h_j)`.
pub fn per_layer_energy(idx: &CostIndices, coeff: &CostCoefficients, dims: [usize; 3]) -> [f64; 3] {
    std::array::from_fn(|j| {
        let l = &idx.layers[j];
        l.latency * l.cpu / (coeff.eta + l.gpu) + coeff.rho * dims[j] as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    /// `R = Ψ + κE`.
    Theory,
    /// `R = λ1 r1′ + λ2 r2′ + λ3 r3′ + κ Σ E_j` on display-scaled risks.
    Protocol,
}

impl std::str::FromStr for AggregateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(AggregateMode::Theory),
            "protocol" => Ok(AggregateMode::Protocol),
            _ => Err(Error::Unknown {
                kind: "aggregate mode",
                value: s.into(),
            }),
        }
    }
}

/// Inputs of the aggregate risk, shared by both modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskTerms {
    /// Theory mode: raw `r1, r2, D`. Protocol mode: display risks `r1′, r2′, r3′`.
    pub risks: [f64; 3],
    /// Theory mode: `[E, 0, 0]` or any split summing to `E`. Protocol mode: `E_j`.
    pub energies: [f64; 3],
}

pub fn aggregate_risk(terms: RiskTerms, p: &ModelParams) -> f64 {
    let l = &p.lambda;
    l[0] * terms.risks[0]
        + l[1] * terms.risks[1]
        + l[2] * terms.risks[2]
        + p.kappa * terms.energies.iter().sum::<f64>()
}

/// `R = Ψ + κE`.
pub fn aggregate_theory(psi: f64, energy: f64, p: &ModelParams) -> f64 {
    psi + p.kappa * energy
}

/// `P = σ(ωR + ξ)`.
pub fn final_probability(r: f64, p: &ModelParams) -> f64 {
    sigmoid(p.omega * r + p.xi_bias)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub e_global: f64,
    pub e_layers: [f64; 3],
}

pub fn energy_report(idx: &CostIndices, coeff: &CostCoefficients, emb: &LayerEmbeddings) -> EnergyReport {
    EnergyReport {
        e_global: conceptual_energy(idx, coeff),
        e_layers: per_layer_energy(idx, coeff, [emb.h1.len(), emb.h2.len(), emb.h3.len()]),
    }
}
