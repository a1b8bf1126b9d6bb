//! Simplex normalization, KL divergence, cross-layer divergence, entropy,
//! misalignment energies and the evidence coupling `Ψ`.

use serde::Serialize;

use crate::reasoner::ModelParams;
use crate::{Error, Result};

/// Floor added to every clipped coordinate before normalizing.
pub const SIMPLEX_EPS: f64 = 1e-8;

/// A strictly positive vector summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexVector {
    values: Vec<f64>,
}

impl SimplexVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension("simplex vector is empty".into()));
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "simplex entries must be positive and finite".into(),
            ));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("simplex entries sum to {s}")));
        }
        Ok(SimplexVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// `Π(x) = (max(x, 0) + ε) / Σ (max(x, 0) + ε)`.
pub fn normalize(x: &[f64]) -> Result<SimplexVector> {
    if x.is_empty() {
        return Err(Error::InvalidDimension("cannot normalize an empty vector".into()));
    }
    Error::check_finite("normalize input", x)?;
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0) + SIMPLEX_EPS).collect();
    let s: f64 = clipped.iter().sum();
    Ok(SimplexVector {
        values: clipped.into_iter().map(|v| v / s).collect(),
    })
}

/// `Σ xᵢ ln(xᵢ / yᵢ)`.
pub fn kl(x: &SimplexVector, y: &SimplexVector) -> Result<f64> {
    Error::check_len("kl", x.dim(), y.dim())?;
    let s: f64 = x
        .values
        .iter()
        .zip(&y.values)
        .map(|(a, b)| a * (a / b).ln())
        .sum();
    // Round-off can leave a tiny negative value when x ≈ y.
    Ok(s.max(0.0))
}

/// `−Σ xᵢ ln xᵢ`.
pub fn entropy_of(x: &SimplexVector) -> f64 {
    let h: f64 = -x.values.iter().map(|v| v * v.ln()).sum::<f64>();
    h.clamp(0.0, (x.dim() as f64).ln())
}

/// Entropy of the normalized fused embedding.
pub fn entropy(h3: &[f64]) -> Result<f64> {
    Ok(entropy_of(&normalize(h3)?))
}

fn pad(x: &[f64], n: usize) -> Vec<f64> {
    let mut v = x.to_vec();
    v.resize(n, 0.0);
    v
}

/// Zero-pads each vector to the largest dimension among them, then normalizes.
pub fn aligned_simplex(vs: &[&[f64]]) -> Result<Vec<SimplexVector>> {
    let n = vs.iter().map(|v| v.len()).max().unwrap_or(0);
    vs.iter().map(|v| normalize(&pad(v, n))).collect()
}

/// Ordered-pair divergences `D_jk = KL(p(h_j) ‖ p(h_k))`, 1-based layers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PairwiseDivergence {
    m: [[f64; 3]; 3],
}

impl PairwiseDivergence {
    pub fn from_simplex(p: &[SimplexVector; 3]) -> Result<Self> {
        let mut m = [[0.0; 3]; 3];
        for j in 0..3 {
            for k in 0..3 {
                if j != k {
                    m[j][k] = kl(&p[j], &p[k])?;
                }
            }
        }
        Ok(PairwiseDivergence { m })
    }

    /// `D_jk` for layers `j, k ∈ {1, 2, 3}`.
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.m[j - 1][k - 1]
    }

    /// `½(D_jk + D_kj)`.
    pub fn symmetric(&self, j: usize, k: usize) -> f64 {
        0.5 * (self.get(j, k) + self.get(k, j))
    }

    /// The six ordered pairs in the order 12, 13, 21, 23, 31, 32.
    pub fn ordered(&self) -> [f64; 6] {
        [
            self.get(1, 2),
            self.get(1, 3),
            self.get(2, 1),
            self.get(2, 3),
            self.get(3, 1),
            self.get(3, 2),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Divergence {
    /// `KL(h1‖h3) + KL(h2‖h3)` on normalized embeddings.
    pub total: f64,
    pub pairwise: PairwiseDivergence,
}

/// Cross-layer divergence on normalized, dimension-aligned embeddings.
pub fn divergence(h1: &[f64], h2: &[f64], h3: &[f64]) -> Result<Divergence> {
    let v = aligned_simplex(&[h1, h2, h3])?;
    let p: [SimplexVector; 3] = v.try_into().expect("three vectors");
    let pairwise = PairwiseDivergence::from_simplex(&p)?;
    Ok(Divergence {
        total: pairwise.get(1, 3) + pairwise.get(2, 3),
        pairwise,
    })
}

/// Generalized KL `Σ x ln(x/y) − x + y`, equal to KL on the simplex and
/// defined for any positive vectors. Used to study `D` as a function of an
/// unconstrained `h3`.
pub fn generalized_kl(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| a * (a / b).ln() - a + b)
        .sum()
}

/// `D̃(h3) = KL̃(h1‖h3) + KL̃(h2‖h3)` without renormalization.
pub fn divergence_unnormalized(h1: &[f64], h2: &[f64], h3: &[f64]) -> f64 {
    generalized_kl(h1, h3) + generalized_kl(h2, h3)
}

/// `∂D̃/∂h3ᵢ = −h1ᵢ/h3ᵢ − h2ᵢ/h3ᵢ + 2`.
pub fn divergence_gradient(h1: &[f64], h2: &[f64], h3: &[f64]) -> Vec<f64> {
    h1.iter()
        .zip(h2)
        .zip(h3)
        .map(|((a, b), c)| -a / c - b / c + 2.0)
        .collect()
}

/// `‖h3 − h1‖² + ‖h3 − h2‖²`, after zero-padding to a common dimension.
pub fn misalignment_energy(h1: &[f64], h2: &[f64], h3: &[f64]) -> f64 {
    let n = h1.len().max(h2.len()).max(h3.len());
    let (a, b, c) = (pad(h1, n), pad(h2, n), pad(h3, n));
    c.iter()
        .zip(&a)
        .zip(&b)
        .map(|((z, x), y)| (z - x).powi(2) + (z - y).powi(2))
        .sum()
}

/// Weights `w_12, w_13, w_23` of the unordered layer pairs.
pub const DEFAULT_PAIR_WEIGHTS: [f64; 3] = [1.0, 1.0, 1.0];

/// `Σ_{j<k} w_jk · ½(D_jk + D_kj)`.
pub fn weighted_divergence_energy(d: &PairwiseDivergence, w: [f64; 3]) -> Result<f64> {
    if w.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "pair weights must be nonnegative, got {w:?}"
        )));
    }
    Ok(w[0] * d.symmetric(1, 2) + w[1] * d.symmetric(1, 3) + w[2] * d.symmetric(2, 3))
}

/// `Ψ = λ1 r1 + λ2 r2 + λ3 D`.
pub fn coupling_psi(r1: f64, r2: f64, d: f64, p: &ModelParams) -> f64 {
    p.lambda[0] * r1 + p.lambda[1] * r2 + p.lambda[2] * d
}

/// Fraction of coordinates where the divergence gradient in `h3` is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableRegion {
    /// Coordinates with `h3ᵢ > (h1ᵢ + h2ᵢ)/2`, where the gradient is positive.
    pub fraction: f64,
    /// Coordinates with `h3ᵢ < h1ᵢ + h2ᵢ`, the alternate sufficient condition
    /// sometimes quoted for the same region.
    pub fraction_stated: f64,
}

/// Evaluated on normalized, aligned embeddings.
pub fn stable_region_fraction(h1: &[f64], h2: &[f64], h3: &[f64]) -> Result<StableRegion> {
    let v = aligned_simplex(&[h1, h2, h3])?;
    Ok(stable_region_of(v[0].values(), v[1].values(), v[2].values()))
}

/// Same as [`stable_region_fraction`] on vectors already normalized.
pub fn stable_region_of(p1: &[f64], p2: &[f64], p3: &[f64]) -> StableRegion {
    let n = p3.len() as f64;
    let mut alg = 0usize;
    let mut stated = 0usize;
    for ((a, b), c) in p1.iter().zip(p2).zip(p3) {
        if *c > 0.5 * (a + b) {
            alg += 1;
        }
        if *c < a + b {
            stated += 1;
        }
    }
    StableRegion {
        fraction: alg as f64 / n,
        fraction_stated: stated as f64 / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub divergence: Divergence,
    pub entropy: f64,
    pub e_mis: f64,
    pub e_weighted: f64,
    pub psi: f64,
    pub stable: StableRegion,
}

/// All alignment measures for one set of embeddings.
pub fn analyze(
    h1: &[f64],
    h2: &[f64],
    h3: &[f64],
    r1: f64,
    r2: f64,
    p: &ModelParams,
    pair_weights: [f64; 3],
) -> Result<AlignmentReport> {
    let v = aligned_simplex(&[h1, h2, h3])?;
    let p3 = [v[0].clone(), v[1].clone(), v[2].clone()];
    let pairwise = PairwiseDivergence::from_simplex(&p3)?;
    let divergence = Divergence {
        total: pairwise.get(1, 3) + pairwise.get(2, 3),
        pairwise,
    };
    Ok(AlignmentReport {
        divergence,
        entropy: entropy(h3)?,
        e_mis: misalignment_energy(h1, h2, h3),
        e_weighted: weighted_divergence_energy(&pairwise, pair_weights)?,
        psi: coupling_psi(r1, r2, divergence.total, p),
        stable: stable_region_of(p3[0].values(), p3[1].values(), p3[2].values()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[1.0; 4]).unwrap().values(), &[0.25; 4]);
        let v = normalize(&[-5.0, 5.0]).unwrap();
        let e = SIMPLEX_EPS;
        assert!(close(v.values()[0], e / (5.0 + 2.0 * e), 1e-20));
        assert!(close(v.values()[1], (5.0 + e) / (5.0 + 2.0 * e), 1e-15));
        let x = [0.1, 0.2, 0.3, 0.4];
        let v = normalize(&x).unwrap();
        for (a, b) in v.values().iter().zip(x) {
            assert!(((a - b) / b).abs() < 1e-7);
        }
        assert!(normalize(&[]).is_err());
        assert!(normalize(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn kl_examples() {
        let x = SimplexVector::new(vec![0.5, 0.5]).unwrap();
        let y = SimplexVector::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(kl(&x, &x).unwrap(), 0.0);
        let expect = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!(close(kl(&x, &y).unwrap(), expect, 1e-15));
        assert!(close(expect, 0.14384, 1e-5));
        let z = SimplexVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(kl(&x, &z).is_err());
        assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn divergence_examples() {
        let h = [0.2, 0.5, 0.3];
        let d = divergence(&h, &h, &h).unwrap();
        assert_eq!(d.total, 0.0);
        assert!(d.pairwise.ordered().iter().all(|&x| x == 0.0));

        let d = divergence(&[0.5, 0.5], &[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!(close(d.total, 0.28768, 1e-5));
        assert_eq!(d.total, d.pairwise.get(1, 3) + d.pairwise.get(2, 3));
    }

    #[test]
    fn mixed_dimensions_are_padded() {
        let d = divergence(&[1.0, 1.0], &[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(d.total > 0.0);
        assert!(close(misalignment_energy(&[1.0], &[0.0, 1.0], &[0.0, 0.0]), 2.0, 0.0));
    }

    #[test]
    fn entropy_examples() {
        assert!(close(entropy(&[1.0; 4]).unwrap(), 4f64.ln(), 1e-12));
        let e = SIMPLEX_EPS;
        let v = SimplexVector::new(vec![1.0 - 3.0 * e, e, e, e]).unwrap();
        assert!(entropy_of(&v) < 1e-6);
    }

    #[test]
    fn misalignment_examples() {
        let h = [0.3, 0.1];
        assert_eq!(misalignment_energy(&h, &h, &h), 0.0);
        assert_eq!(misalignment_energy(&[0.0, 0.0], &[2.0, 0.0], &[1.0, 0.0]), 2.0);
    }

    #[test]
    fn weighted_energy_examples() {
        let d = divergence(&[0.1, 0.9], &[0.6, 0.4], &[0.3, 0.7]).unwrap().pairwise;
        assert_eq!(weighted_divergence_energy(&d, [0.0; 3]).unwrap(), 0.0);
        let flat = PairwiseDivergence { m: [[0.0, 0.7, 0.7], [0.7, 0.0, 0.7], [0.7, 0.7, 0.0]] };
        assert!(close(weighted_divergence_energy(&flat, [1.0; 3]).unwrap(), 2.1, 1e-15));
        assert!(weighted_divergence_energy(&d, [1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn psi_examples() {
        let mut p = ModelParams::seeded(1, crate::reasoner::Dims::balanced(2), Default::default())
            .unwrap();
        p.lambda = [0.0; 3];
        assert_eq!(coupling_psi(1.0, 1.0, 1.0, &p), 0.0);
        p.lambda = [1.0, 2.0, 3.0];
        assert_eq!(coupling_psi(1.0, 1.0, 1.0, &p), 6.0);
        assert!(coupling_psi(1.0, 1.0, 1.1, &p) > 6.0);
    }

    #[test]
    fn stable_region_examples() {
        let u = [0.25; 4];
        assert_eq!(stable_region_of(&u, &u, &u).fraction, 0.0);
        let s = stable_region_of(&[0.9, 0.1], &[0.9, 0.1], &[0.5, 0.5]);
        assert_eq!(s.fraction, 0.5);
        assert_eq!(s.fraction_stated, 0.5);
    }

    #[test]
    fn generalized_kl_matches_kl_on_simplex() {
        let x = normalize(&[0.3, 0.2, 0.9]).unwrap();
        let y = normalize(&[0.5, 0.1, 0.4]).unwrap();
        assert!(close(generalized_kl(x.values(), y.values()), kl(&x, &y).unwrap(), 1e-15));
        let g = divergence_gradient(&[1.0], &[1.0], &[1.0]);
        assert_eq!(g, vec![0.0]);
    }
}
