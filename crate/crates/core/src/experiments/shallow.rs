//! Single affine map over `[one-hot(arch); c; o]` with a logistic head, used
//! as the shallow baseline in the ablation study.

use crate::descriptors::{Arch, FirmwareDescriptor};
use crate::linalg::{self, Matrix};
use crate::reasoner::Dims;
use crate::rng::{Purpose, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowModel {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ShallowModel {
    /// Drawn from its own stream so it never shares entries with the layered
    /// model built from the same seed. Output width is `d3`.
    pub fn seeded(seed: u64, dims: Dims, monotone: bool) -> Self {
        let mut s = Stream::new(seed, 0, Purpose::ShallowParams);
        let fan_in = Arch::ALL.len() + dims.k_c + dims.k_o;
        let sd = (fan_in as f64).powf(-0.25);
        let weight = Matrix::from_fn(dims.d3, fan_in, |_, _| sd * s.normal());
        let bias = (0..dims.d3).map(|_| sd * s.normal()).collect();
        let sd_g = (dims.d3 as f64).powf(-0.25);
        let gamma = (0..dims.d3)
            .map(|_| {
                let g = sd_g * s.normal();
                if monotone {
                    g.abs()
                } else {
                    g
                }
            })
            .collect();
        ShallowModel {
            weight,
            bias,
            gamma,
        }
    }

    pub fn input(f: &FirmwareDescriptor) -> Vec<f64> {
        let mut x = vec![0.0; Arch::ALL.len()];
        x[f.metadata.arch.index()] = 1.0;
        x.extend_from_slice(&f.config);
        x.extend_from_slice(&f.structure);
        x
    }

    /// `h_s = W_s x + b_s`.
    pub fn forward(&self, f: &FirmwareDescriptor) -> Result<Vec<f64>> {
        let x = Self::input(f);
        Error::check_finite("shallow input", &x)?;
        let z = self.weight.mul_vec(&x)?;
        Ok(z.iter().zip(&self.bias).map(|(z, b)| z + b).collect())
    }

    /// `γ_sᵀ h_s`, before the shared offset `δ`.
    pub fn head(&self, h: &[f64]) -> f64 {
        linalg::dot(&self.gamma, h)
    }
}
