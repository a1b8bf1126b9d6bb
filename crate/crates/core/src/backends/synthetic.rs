use std::time::Instant;

use super::AuxSignals;
use crate::reasoner::{self, sigmoid, ModelParams};
use crate::Result;

/// What a layer consumes.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a> {
    Config(&'a [f64]),
    Structure(&'a [f64]),
    Fusion { h1: &'a [f64], h2: &'a [f64] },
}

impl LayerInput<'_> {
    pub fn layer(&self) -> u8 {
        match self {
            LayerInput::Config(_) => 1,
            LayerInput::Structure(_) => 2,
            LayerInput::Fusion { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub embedding: Vec<f64>,
    /// `r1`, `r2`, or the fusion logit `γᵀh3 + δ`.
    pub raw_risk: f64,
    /// `risk_scale · σ(raw_risk)`.
    pub display_risk: f64,
    pub aux: AuxSignals,
}

/// `u = 1 − |2p − 1|`: one at the decision boundary, zero at saturation.
pub fn uncertainty_from_probability(p: f64) -> f64 {
    (1.0 - (2.0 * p - 1.0).abs()).clamp(0.0, 1.0)
}

/// Runs one layer of the symbolic pipeline. When `measure_latency` is false
/// the recorded wall latency is zero, which keeps outputs bit-reproducible.
pub fn evaluate_layer(input: LayerInput<'_>, p: &ModelParams, measure_latency: bool) -> Result<LayerOutput> {
    let start = measure_latency.then(Instant::now);
    let (embedding, raw_risk) = match input {
        LayerInput::Config(c) => {
            let h = reasoner::forward_config(c, p)?;
            let r = reasoner::config_risk(&h, p);
            (h, r)
        }
        LayerInput::Structure(o) => {
            let h = reasoner::forward_structure(o, p)?;
            let r = reasoner::structure_risk(&h, p);
            (h, r)
        }
        LayerInput::Fusion { h1, h2 } => {
            let h = reasoner::fuse(h1, h2, p)?;
            let r = reasoner::fusion_logit(&h, p);
            (h, r)
        }
    };
    let prob = sigmoid(raw_risk);
    let wall_latency_ms = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
    Ok(LayerOutput {
        embedding,
        raw_risk,
        display_risk: p.risk_scale * prob,
        aux: AuxSignals {
            uncertainty: uncertainty_from_probability(prob),
            reasoning_depth: u32::from(input.layer()),
            wall_latency_ms,
            signature: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reasoner::{Dims, InitOptions};

    #[test]
    fn fusion_at_boundary_is_maximally_uncertain() {
        let mut p = ModelParams::seeded(1, Dims::balanced(3), InitOptions::default()).unwrap();
        p.gamma = vec![0.0; 3];
        p.delta = 0.0;
        let out = evaluate_layer(
            LayerInput::Fusion {
                h1: &[0.1, 0.2, 0.3],
                h2: &[1.0, 0.0, 2.0],
            },
            &p,
            false,
        )
        .unwrap();
        assert_eq!(out.display_risk, 50.0);
        assert_eq!(out.aux.uncertainty, 1.0);
        assert_eq!(out.aux.reasoning_depth, 3);
        assert_eq!(out.aux.wall_latency_ms, 0.0);
    }

    #[test]
    fn matches_direct_calls() {
        let p = ModelParams::seeded(4, Dims::balanced(4), InitOptions::default()).unwrap();
        let c = [0.3, -0.2, 1.0, 0.0];
        let out = evaluate_layer(LayerInput::Config(&c), &p, true).unwrap();
        let h1 = reasoner::forward_config(&c, &p).unwrap();
        assert_eq!(out.embedding, h1);
        assert_eq!(out.raw_risk, reasoner::config_risk(&h1, &p));
        assert!(out.aux.wall_latency_ms >= 0.0);
        assert_eq!(uncertainty_from_probability(1.0), 0.0);
        assert_eq!(uncertainty_from_probability(0.25), 0.5);
    }
}
