//! The tri-layer mapping: configuration interpreter (sigmoid-affine),
//! structural analyzer (ReLU-affine) and affine fusion, with per-layer risk
//! scores and the fusion-level probability.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix};
use crate::rng::{Purpose, Stream};
use crate::{Error, Result};

/// Layer and input dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub k_c: usize,
    pub k_o: usize,
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            k_c: 16,
            k_o: 16,
            d1: 12,
            d2: 12,
            d3: 12,
        }
    }
}

impl Dims {
    pub fn balanced(d: usize) -> Self {
        Dims {
            k_c: d,
            k_o: d,
            d1: d,
            d2: d,
            d3: d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.k_c, self.k_o, self.d1, self.d2, self.d3].contains(&0) {
            return Err(Error::InvalidDimension(format!(
                "all dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Closed-form multiply-add count of one forward pass.
    pub fn multiply_adds(&self) -> Result<MacCounts> {
        self.validate()?;
        let config = (self.d1 * self.k_c) as u64;
        let structure = (self.d2 * self.k_o) as u64;
        let fusion = (self.d3 * (self.d1 + self.d2)) as u64;
        Ok(MacCounts {
            config,
            structure,
            fusion,
            total: config + structure + fusion,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MacCounts {
    pub config: u64,
    pub structure: u64,
    pub fusion: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub alpha1: f64,
    pub beta1: f64,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub alpha2: f64,
    /// `A`, maps `h1` into the fused space.
    pub fusion_a: Matrix,
    /// `B`, maps `h2` into the fused space.
    pub fusion_b: Matrix,
    /// `c3`, the fusion bias.
    pub fusion_bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: f64,
    pub lambda: [f64; 3],
    pub kappa: f64,
    pub omega: f64,
    pub xi_bias: f64,
    pub risk_scale: f64,
    /// When set, `gamma`, `A`, `B` and `c3` are entrywise nonnegative.
    pub monotone: bool,
}

/// Knobs for seeded initialization that are not part of the model itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitOptions {
    pub monotone: bool,
    /// Added to every entry of `b1`.
    pub config_bias_offset: f64,
    /// Added to every entry of `b2`.
    pub structure_bias_offset: f64,
    /// Multiplies the standard deviation of `b1`.
    #[serde(default = "one")]
    pub config_bias_spread: f64,
    /// Multiplies the standard deviation of `b2`.
    #[serde(default = "one")]
    pub structure_bias_spread: f64,
    /// Multiplies the fusion offset `c3`.
    #[serde(default = "one")]
    pub fusion_bias_scale: f64,
    /// Multiplies `W1`.
    #[serde(default = "one")]
    pub config_weight_scale: f64,
    /// Multiplies the structure block `B` of the fusion.
    #[serde(default = "one")]
    pub fusion_structure_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            monotone: true,
            config_bias_offset: 0.0,
            structure_bias_offset: 0.0,
            config_bias_spread: 1.0,
            structure_bias_spread: 1.0,
            fusion_bias_scale: 1.0,
            config_weight_scale: 1.0,
            fusion_structure_scale: 1.0,
        }
    }
}

fn gaussian_matrix(s: &mut Stream, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    // variance 1/sqrt(fan_in)
    let sd = (fan_in as f64).powf(-0.25);
    Matrix::from_fn(rows, cols, |_, _| sd * s.normal())
}

fn gaussian_vec(s: &mut Stream, n: usize, fan_in: usize, offset: f64, spread: f64) -> Vec<f64> {
    let sd = spread * (fan_in as f64).powf(-0.25);
    (0..n).map(|_| offset + sd * s.normal()).collect()
}

impl ModelParams {
    /// Deterministic initialization from `seed`. Matrix and bias entries are
    /// drawn with variance `1/√fan_in`; scalar coefficients start at neutral
    /// values (unit risk slopes, zero offsets, unit coupling weights, and an
    /// outer slope of one over the display scale).
    pub fn seeded(seed: u64, dims: Dims, init: InitOptions) -> Result<Self> {
        dims.validate()?;
        let mut s = Stream::new(seed, 0, Purpose::Params);
        let Dims { k_c, k_o, d1, d2, d3 } = dims;
        let w1 = gaussian_matrix(&mut s, d1, k_c, k_c).map(|x| init.config_weight_scale * x);
        let b1 = gaussian_vec(&mut s, d1, k_c, init.config_bias_offset, init.config_bias_spread);
        let w2 = gaussian_matrix(&mut s, d2, k_o, k_o);
        let b2 = gaussian_vec(&mut s, d2, k_o, init.structure_bias_offset, init.structure_bias_spread);
        let mut fusion_a = gaussian_matrix(&mut s, d3, d1, d1);
        let mut fusion_b = gaussian_matrix(&mut s, d3, d2, d2).map(|x| init.fusion_structure_scale * x);
        let mut fusion_bias = gaussian_vec(&mut s, d3, d1 + d2, 0.0, init.fusion_bias_scale);
        let mut gamma = gaussian_vec(&mut s, d3, d3, 0.0, 1.0);
        if init.monotone {
            fusion_a = fusion_a.map(f64::abs);
            fusion_b = fusion_b.map(f64::abs);
            fusion_bias.iter_mut().for_each(|x| *x = x.abs());
            gamma.iter_mut().for_each(|x| *x = x.abs());
        }
        Ok(ModelParams {
            w1,
            b1,
            alpha1: 1.0,
            beta1: 0.0,
            w2,
            b2,
            alpha2: 1.0,
            fusion_a,
            fusion_b,
            fusion_bias,
            gamma,
            delta: 0.0,
            lambda: [1.0; 3],
            kappa: 0.0,
            omega: 0.01,
            xi_bias: 0.0,
            risk_scale: 100.0,
            monotone: init.monotone,
        })
    }

    pub fn dims(&self) -> Dims {
        Dims {
            k_c: self.w1.cols,
            k_o: self.w2.cols,
            d1: self.w1.rows,
            d2: self.w2.rows,
            d3: self.fusion_a.rows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        d.validate()?;
        self.w1.validate("W1")?;
        self.w2.validate("W2")?;
        self.fusion_a.validate("A")?;
        self.fusion_b.validate("B")?;
        Error::check_len("b1", d.d1, self.b1.len())?;
        Error::check_len("b2", d.d2, self.b2.len())?;
        Error::check_len("A columns", d.d1, self.fusion_a.cols)?;
        Error::check_len("B rows", d.d3, self.fusion_b.rows)?;
        Error::check_len("B columns", d.d2, self.fusion_b.cols)?;
        Error::check_len("c3", d.d3, self.fusion_bias.len())?;
        Error::check_len("gamma", d.d3, self.gamma.len())?;
        Error::check_finite("b1", &self.b1)?;
        Error::check_finite("b2", &self.b2)?;
        Error::check_finite("c3", &self.fusion_bias)?;
        Error::check_finite("gamma", &self.gamma)?;
        let scalars = [
            self.alpha1,
            self.beta1,
            self.alpha2,
            self.delta,
            self.kappa,
            self.omega,
            self.xi_bias,
            self.risk_scale,
        ];
        Error::check_finite("scalar coefficients", &scalars)?;
        Error::check_finite("lambda", &self.lambda)?;
        if self.lambda.iter().any(|&l| l < 0.0) || self.kappa < 0.0 {
            return Err(Error::InvalidConfig(
                "lambda and kappa must be nonnegative".into(),
            ));
        }
        if self.monotone
            && (self.gamma.iter().any(|&g| g < 0.0)
                || self.fusion_a.data.iter().any(|&g| g < 0.0)
                || self.fusion_b.data.iter().any(|&g| g < 0.0))
        {
            return Err(Error::InvalidConfig(
                "monotone regime requires nonnegative gamma, A and B".into(),
            ));
        }
        Ok(())
    }

    /// `[A | B]`, the layer-3 weight matrix used by the cost model.
    pub fn fusion_weight_frobenius(&self) -> f64 {
        (self.fusion_a.frobenius_sq() + self.fusion_b.frobenius_sq()).sqrt()
    }

    pub fn multiply_adds(&self) -> MacCounts {
        self.dims().multiply_adds().expect("validated params")
    }
}

/// Logistic function in the two-branch form that never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps a raw risk onto `[0, scale]`.
pub fn display_risk(raw: f64, scale: f64) -> f64 {
    scale * sigmoid(raw)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEmbeddings {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub h3: Vec<f64>,
    /// `[h1; h2]`.
    pub u: Vec<f64>,
}

impl LayerEmbeddings {
    pub fn new(h1: Vec<f64>, h2: Vec<f64>, h3: Vec<f64>) -> Self {
        let mut u = h1.clone();
        u.extend_from_slice(&h2);
        LayerEmbeddings { h1, h2, h3, u }
    }
}

/// `h1 = σ(W1 c + b1)`.
pub fn forward_config(c: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    Error::check_finite("config vector", c)?;
    let z = p.w1.mul_vec(c)?;
    Ok(z.iter().zip(&p.b1).map(|(z, b)| sigmoid(z + b)).collect())
}

/// `r1 = α1 ‖h1‖₁ + β1`.
pub fn config_risk(h1: &[f64], p: &ModelParams) -> f64 {
    p.alpha1 * linalg::norm_l1(h1) + p.beta1
}

/// `h2 = ReLU(W2 o + b2)`.
pub fn forward_structure(o: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    Error::check_finite("structure vector", o)?;
    let z = p.w2.mul_vec(o)?;
    Ok(z.iter().zip(&p.b2).map(|(z, b)| (z + b).max(0.0)).collect())
}

/// `r2 = α2 ln(1 + ‖h2‖²)`.
pub fn structure_risk(h2: &[f64], p: &ModelParams) -> f64 {
    p.alpha2 * linalg::norm_sq(h2).ln_1p()
}

/// `h3 = A h1 + B h2 + c3`.
pub fn fuse(h1: &[f64], h2: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    let a = p.fusion_a.mul_vec(h1)?;
    let b = p.fusion_b.mul_vec(h2)?;
    Ok(a.iter()
        .zip(&b)
        .zip(&p.fusion_bias)
        .map(|((x, y), c)| x + y + c)
        .collect())
}

/// `γᵀh3 + δ`.
pub fn fusion_logit(h3: &[f64], p: &ModelParams) -> f64 {
    linalg::dot(&p.gamma, h3) + p.delta
}

/// `P = σ(γᵀh3 + δ)`.
pub fn fusion_probability(h3: &[f64], p: &ModelParams) -> f64 {
    sigmoid(fusion_logit(h3, p))
}

/// `∂P/∂h3 = σ'(γᵀh3 + δ) γ`.
pub fn fusion_probability_gradient(h3: &[f64], p: &ModelParams) -> Vec<f64> {
    let s = fusion_probability(h3, p);
    p.gamma.iter().map(|g| s * (1.0 - s) * g).collect()
}

/// Runs all three layers.
pub fn forward(c: &[f64], o: &[f64], p: &ModelParams) -> Result<LayerEmbeddings> {
    let h1 = forward_config(c, p)?;
    let h2 = forward_structure(o, p)?;
    let h3 = fuse(&h1, &h2, p)?;
    Ok(LayerEmbeddings::new(h1, h2, h3))
}

/// [`forward`] with every matrix–vector multiply-add counted.
pub fn forward_counted(
    c: &[f64],
    o: &[f64],
    p: &ModelParams,
) -> Result<(LayerEmbeddings, MacCounts)> {
    let mut counts = MacCounts::default();
    let z1 = p.w1.mul_vec_counted(c, &mut counts.config)?;
    let h1: Vec<f64> = z1.iter().zip(&p.b1).map(|(z, b)| sigmoid(z + b)).collect();
    let z2 = p.w2.mul_vec_counted(o, &mut counts.structure)?;
    let h2: Vec<f64> = z2.iter().zip(&p.b2).map(|(z, b)| (z + b).max(0.0)).collect();
    let a = p.fusion_a.mul_vec_counted(&h1, &mut counts.fusion)?;
    let b = p.fusion_b.mul_vec_counted(&h2, &mut counts.fusion)?;
    let h3 = a
        .iter()
        .zip(&b)
        .zip(&p.fusion_bias)
        .map(|((x, y), c)| x + y + c)
        .collect();
    counts.total = counts.config + counts.structure + counts.fusion;
    Ok((LayerEmbeddings::new(h1, h2, h3), counts))
}
