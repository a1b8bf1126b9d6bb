//! Per-row evaluation and the parallel runner.
//!
//! A row is computed in two steps. [`Pipeline::features`] runs the layers and
//! the alignment measures, none of which depend on the scalar coefficients.
//! [`score`] then applies risk slopes, cost coefficients and the aggregate.
//! Calibration reuses the second step on cached features.

use rayon::prelude::*;

use super::record::{RiskRecord, Variant};
use super::shallow::ShallowModel;
use crate::alignment::{self, PairwiseDivergence};
use crate::backends::{uncertainty_from_probability, AuxSignals, Backend};
use crate::cost_model::{conceptual_energy_from, CostCoefficients};
use crate::descriptors::{perturb, ExposureLevel, FirmwareDescriptor};
use crate::linalg;
use crate::params::ParamsFile;
use crate::reasoner::{self, sigmoid, ModelParams};
use crate::{Error, Result};

/// Everything about a row that the scalar coefficients cannot change.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub instance_id: u64,
    pub exposure: ExposureLevel,
    pub variant: Variant,
    /// `‖h1‖₁`.
    pub config_l1: f64,
    /// `ln(1 + ‖h2‖²)`.
    pub structure_log: f64,
    /// `γᵀh3` without the offset `δ` (the shallow head for that variant).
    pub fusion_dot: f64,
    /// `‖h_j‖₁`, `‖h_j‖²`, `‖W_j‖_F` and `dim h_j` per cost slot.
    pub l1: [f64; 3],
    pub sq: [f64; 3],
    pub weight_norm: [f64; 3],
    pub dims: [usize; 3],
    pub cost_layers: [bool; 3],
    pub pairwise: [f64; 6],
    pub divergence: f64,
    pub entropy: f64,
    pub e_mis: f64,
    pub e_weighted: f64,
    pub stable: [f64; 2],
}

/// Outputs of the coefficient-dependent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub r1_raw: f64,
    pub r2_raw: f64,
    pub display: [f64; 3],
    pub p_fusion: f64,
    pub uncertainty: [f64; 3],
    pub costs: [[f64; 4]; 3],
    pub e_layers: [f64; 3],
    pub e_global: f64,
    pub psi: f64,
    pub r_theory: f64,
    pub r_protocol: f64,
    pub p_final: f64,
}

/// Applies the scalar coefficients to cached features. `overrides` replaces
/// display risks (remote backend); NaN entries of the output mark absent
/// layers.
pub fn score(
    f: &Features,
    p: &ModelParams,
    c: &CostCoefficients,
    overrides: [Option<f64>; 3],
) -> Scores {
    let risk = f.variant.risk_layers();
    let nan = f64::NAN;
    let r1 = if risk[0] { p.alpha1 * f.config_l1 + p.beta1 } else { nan };
    let r2 = if risk[1] { p.alpha2 * f.structure_log } else { nan };
    let logit3 = if risk[2] { f.fusion_dot + p.delta } else { nan };
    let probs = [sigmoid(r1), sigmoid(r2), sigmoid(logit3)];
    let display: [f64; 3] =
        std::array::from_fn(|j| overrides[j].unwrap_or(p.risk_scale * probs[j]));
    let p_fusion = match overrides[2] {
        Some(r) if risk[2] => r / p.risk_scale,
        _ => probs[2],
    };
    let uncertainty = probs.map(|q| if q.is_nan() { nan } else { uncertainty_from_probability(q) });

    let mut costs = [[nan; 4]; 3];
    let mut e_layers = [nan; 3];
    let mut tot = [0.0; 4];
    for j in 0..3 {
        if !f.cost_layers[j] {
            continue;
        }
        let row = [
            c.tau[j] * f.weight_norm[j],
            c.zeta[j] * f.l1[j],
            c.gpu_coeff[j] * f.sq[j],
            c.nu[j] * f.dims[j] as f64,
        ];
        for (t, v) in tot.iter_mut().zip(row) {
            *t += v;
        }
        e_layers[j] = row[0] * row[1] / (c.eta + row[2]) + c.rho * f.dims[j] as f64;
        costs[j] = row;
    }
    let e_global = conceptual_energy_from(tot[0], tot[1], tot[2], tot[3], c.eta, c.rho);

    let or0 = |x: f64| if x.is_nan() { 0.0 } else { x };
    let psi = p.lambda[0] * or0(r1) + p.lambda[1] * or0(r2) + p.lambda[2] * or0(f.divergence);
    let r_theory = psi + p.kappa * e_global;

    let lambda = if f.variant == Variant::Shallow {
        [0.0, 0.0, p.lambda.iter().sum()]
    } else {
        p.lambda
    };
    let mut r_protocol = 0.0;
    for j in 0..3 {
        if risk[j] {
            r_protocol += lambda[j] * display[j];
        }
        if f.cost_layers[j] {
            r_protocol += p.kappa * e_layers[j];
        }
    }
    Scores {
        r1_raw: r1,
        r2_raw: r2,
        display: std::array::from_fn(|j| if risk[j] { display[j] } else { nan }),
        p_fusion: if risk[2] { p_fusion } else { nan },
        uncertainty,
        costs,
        e_layers,
        e_global,
        psi,
        r_theory,
        r_protocol,
        p_final: sigmoid(p.omega * r_protocol + p.xi_bias),
    }
}

/// The layered model, its shallow baseline and the coupling settings.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub params: ParamsFile,
    pub shallow: ShallowModel,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or(0.0);
            let y = b.get(i).copied().unwrap_or(0.0);
            (x - y).powi(2)
        })
        .sum()
}

impl Pipeline {
    pub fn new(params: ParamsFile) -> Self {
        let shallow = ShallowModel::seeded(params.param_seed, params.model.dims(), params.model.monotone);
        Pipeline { params, shallow }
    }

    pub fn model(&self) -> &ModelParams {
        &self.params.model
    }

    pub fn check_descriptor(&self, f: &FirmwareDescriptor) -> Result<()> {
        let d = self.model().dims();
        Error::check_len("descriptor config", d.k_c, f.k_c())?;
        Error::check_len("descriptor structure", d.k_o, f.k_o())
    }

    /// Layer outputs and alignment measures of an already perturbed descriptor.
    pub fn features(&self, f: &FirmwareDescriptor, exposure: ExposureLevel, variant: Variant) -> Result<Features> {
        self.check_descriptor(f)?;
        let p = self.model();
        let d = p.dims();
        let mut h1 = reasoner::forward_config(&f.config, p)?;
        let mut h2 = reasoner::forward_structure(&f.structure, p)?;
        match variant {
            Variant::NoConfig => h1 = vec![0.0; d.d1],
            Variant::NoStructure => h2 = vec![0.0; d.d2],
            _ => {}
        }
        let (h3, fusion_dot, w3) = match variant {
            Variant::NoFusion => (vec![0.0; d.d3], f64::NAN, 0.0),
            Variant::Shallow => {
                let h = self.shallow.forward(f)?;
                let dot = self.shallow.head(&h);
                (h, dot, self.shallow.weight.frobenius())
            }
            _ => {
                let h = reasoner::fuse(&h1, &h2, p)?;
                let dot = linalg::dot(&p.gamma, &h);
                (h, dot, p.fusion_weight_frobenius())
            }
        };

        // Which embeddings take part in the alignment measures.
        let present = match variant {
            Variant::Full | Variant::Shallow => [true, true, true],
            Variant::NoConfig => [false, true, true],
            Variant::NoStructure => [true, false, true],
            Variant::NoFusion => [true, true, false],
        };
        let hs = [&h1, &h2, &h3];
        let simplex = alignment::aligned_simplex(&[&h1, &h2, &h3])?;
        let simplex: [_; 3] = simplex.try_into().expect("three vectors");
        let pd = PairwiseDivergence::from_simplex(&simplex)?;
        let defined = |j: usize, k: usize| {
            present[j - 1] && present[k - 1] && !(variant == Variant::Shallow && j + k == 3)
        };
        const ORDER: [(usize, usize); 6] = [(1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2)];
        let pairwise = ORDER.map(|(j, k)| if defined(j, k) { pd.get(j, k) } else { f64::NAN });

        let nan = f64::NAN;
        let sources: Vec<usize> = (1..=2).filter(|&j| defined(j, 3)).collect();
        let (divergence, entropy, e_mis) = if present[2] && !sources.is_empty() {
            (
                sources.iter().map(|&j| pd.get(j, 3)).sum(),
                alignment::entropy_of(&simplex[2]),
                sources.iter().map(|&j| sq_dist(&h3, hs[j - 1])).sum(),
            )
        } else {
            (nan, nan, nan)
        };
        let w = self.params.pair_weights;
        let e_weighted = [(1, 2, w[0]), (1, 3, w[1]), (2, 3, w[2])]
            .iter()
            .filter(|(j, k, _)| defined(*j, *k))
            .map(|&(j, k, wt)| wt * pd.symmetric(j, k))
            .sum();
        let stable = if variant == Variant::Full {
            let s = alignment::stable_region_of(
                simplex[0].values(),
                simplex[1].values(),
                simplex[2].values(),
            );
            [s.fraction, s.fraction_stated]
        } else {
            [nan, nan]
        };

        let cost_layers = match variant {
            Variant::NoFusion => [true, true, false],
            Variant::Shallow => [false, false, true],
            _ => [true, true, true],
        };
        Ok(Features {
            instance_id: f.id,
            exposure,
            variant,
            config_l1: linalg::norm_l1(&h1),
            structure_log: linalg::norm_sq(&h2).ln_1p(),
            fusion_dot,
            l1: hs.map(|h| linalg::norm_l1(h)),
            sq: hs.map(|h| linalg::norm_sq(h)),
            weight_norm: [p.w1.frobenius(), p.w2.frobenius(), w3],
            dims: [d.d1, d.d2, d.d3],
            cost_layers,
            pairwise,
            divergence,
            entropy,
            e_mis,
            e_weighted,
            stable,
        })
    }

    /// Synthetic record for one descriptor as given (no perturbation).
    pub fn evaluate(&self, f: &FirmwareDescriptor) -> Result<RiskRecord> {
        let feat = self.features(f, ExposureLevel::None, Variant::Full)?;
        Ok(assemble(&feat, self, [None; 3], Default::default()))
    }
}

/// Per-row backend results layered over the synthetic scores.
#[derive(Debug, Clone, Default)]
pub struct BackendOutcome {
    pub aux: [Option<AuxSignals>; 3],
    pub retries: u32,
    pub failed: bool,
}

pub fn assemble(f: &Features, pl: &Pipeline, overrides: [Option<f64>; 3], out: BackendOutcome) -> RiskRecord {
    let p = pl.model();
    let s = score(f, p, &pl.params.costs, overrides);
    let risk = f.variant.risk_layers();
    let mut uncertainty = s.uncertainty;
    let mut depth: [Option<u32>; 3] = std::array::from_fn(|j| risk[j].then_some(j as u32 + 1));
    if f.variant == Variant::Shallow {
        depth[2] = Some(1);
    }
    let mut wall_ms = risk.map(|r| if r { 0.0 } else { f64::NAN });
    let mut signature = Vec::new();
    for (j, aux) in out.aux.iter().enumerate() {
        if let Some(a) = aux {
            uncertainty[j] = a.uncertainty;
            depth[j] = Some(a.reasoning_depth);
            wall_ms[j] = a.wall_latency_ms;
            if let Some(sig) = &a.signature {
                signature.push(sig.clone());
            }
        }
    }
    RiskRecord {
        instance_id: f.instance_id,
        exposure: f.exposure,
        variant: f.variant,
        r_cfg: s.display[0],
        r_struct: s.display[1],
        r_fusion: s.display[2],
        r1_raw: s.r1_raw,
        r2_raw: s.r2_raw,
        p_fusion: s.p_fusion,
        p_final: s.p_final,
        divergence: f.divergence,
        pairwise: f.pairwise,
        entropy: f.entropy,
        e_mis: f.e_mis,
        e_weighted: f.e_weighted,
        psi: s.psi,
        r_theory: s.r_theory,
        r_protocol: s.r_protocol,
        e_global: s.e_global,
        e_layers: s.e_layers,
        costs: s.costs,
        uncertainty,
        depth,
        wall_ms,
        stable_fraction: f.stable[0],
        stable_fraction_stated: f.stable[1],
        retries: out.retries,
        backend_failure: out.failed,
        excluded: out.failed,
        signature: signature.join(";"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub levels: Vec<ExposureLevel>,
    pub variants: Vec<Variant>,
    /// Seed of the perturbation streams.
    pub seed: u64,
    /// Share perturbation draws across levels.
    pub paired: bool,
    /// Worker threads; 0 means one per logical core.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            levels: vec![ExposureLevel::Medium, ExposureLevel::High],
            variants: vec![Variant::Full],
            seed: 42,
            paired: true,
            workers: 0,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidConfig("at least one exposure level is required".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("at least one variant is required".into()));
        }
        Ok(())
    }
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
}

/// All `(descriptor, level, variant)` jobs in output order.
fn jobs(n: usize, opts: &RunOptions) -> Vec<(usize, ExposureLevel, Variant)> {
    let mut v = Vec::with_capacity(n * opts.levels.len() * opts.variants.len());
    for i in 0..n {
        for &l in &opts.levels {
            for &var in &opts.variants {
                v.push((i, l, var));
            }
        }
    }
    v
}

/// Features of every row, in output order.
pub fn run_features(
    pl: &Pipeline,
    descriptors: &[FirmwareDescriptor],
    opts: &RunOptions,
) -> Result<Vec<Features>> {
    opts.validate()?;
    let jobs = jobs(descriptors.len(), opts);
    thread_pool(opts.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(i, level, variant)| {
                let f = perturb(&descriptors[i], level, opts.seed, opts.paired);
                pl.features(&f, level, variant)
            })
            .collect()
    })
}

fn remote_row(
    client: &crate::backends::RemoteClient,
    f: &FirmwareDescriptor,
    variant: Variant,
) -> ([Option<f64>; 3], BackendOutcome) {
    let mut overrides = [None; 3];
    let mut out = BackendOutcome::default();
    if variant == Variant::Shallow {
        return (overrides, out);
    }
    for (j, present) in variant.risk_layers().into_iter().enumerate() {
        if !present {
            continue;
        }
        match client.evaluate(f, j as u8 + 1) {
            Ok(r) => {
                overrides[j] = Some(r.risk);
                out.retries += r.retries;
                out.aux[j] = Some(r.aux);
            }
            Err(e) => {
                log::warn!("{e}");
                out.retries += e.retries;
                out.failed = true;
                overrides = [None; 3];
                break;
            }
        }
    }
    (overrides, out)
}

/// Runs every descriptor at every level and variant. Output order is
/// descriptor, then level, then variant, independent of the worker count.
pub fn run_records(
    pl: &Pipeline,
    descriptors: &[FirmwareDescriptor],
    backend: &Backend,
    opts: &RunOptions,
) -> Result<Vec<RiskRecord>> {
    opts.validate()?;
    let jobs = jobs(descriptors.len(), opts);
    let workers = match backend.max_in_flight() {
        Some(m) if opts.workers == 0 || opts.workers > m => m,
        _ => opts.workers,
    };
    thread_pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(i, level, variant)| {
                let f = perturb(&descriptors[i], level, opts.seed, opts.paired);
                let feat = pl.features(&f, level, variant)?;
                let (overrides, out) = match backend {
                    Backend::Synthetic => ([None; 3], BackendOutcome::default()),
                    Backend::Remote(c) => remote_row(c, &f, variant),
                };
                Ok(assemble(&feat, pl, overrides, out))
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_model::{energy_report, layer_costs, RiskTerms};
    use crate::descriptors::{GeneratorConfig, Generator};
    use crate::reasoner::{Dims, InitOptions};

    fn pipeline() -> Pipeline {
        let mut p = ParamsFile::seeded("t", 5, Dims::default(), InitOptions::default()).unwrap();
        p.model.kappa = 0.3;
        p.model.omega = 0.01;
        p.model.xi_bias = -1.0;
        p.model.beta1 = -2.0;
        p.costs.rho = 0.05;
        Pipeline::new(p)
    }

    fn descriptors(n: usize) -> Vec<FirmwareDescriptor> {
        Generator::new(GeneratorConfig::isotropic(n, 9, 16, 16, 0.1))
            .unwrap()
            .generate()
    }

    #[test]
    fn full_row_matches_direct_computation() {
        let pl = pipeline();
        let p = pl.model();
        let f = &descriptors(1)[0];
        let rec = pl.evaluate(f).unwrap();

        let emb = reasoner::forward(&f.config, &f.structure, p).unwrap();
        let r1 = reasoner::config_risk(&emb.h1, p);
        let r2 = reasoner::structure_risk(&emb.h2, p);
        let al = alignment::analyze(&emb.h1, &emb.h2, &emb.h3, r1, r2, p, pl.params.pair_weights).unwrap();
        let idx = layer_costs(p, &emb, &pl.params.costs);
        let en = energy_report(&idx, &pl.params.costs, &emb);
        let disp = [
            reasoner::display_risk(r1, p.risk_scale),
            reasoner::display_risk(r2, p.risk_scale),
            p.risk_scale * reasoner::fusion_probability(&emb.h3, p),
        ];
        let rp = crate::cost_model::aggregate_risk(
            RiskTerms {
                risks: disp,
                energies: en.e_layers,
            },
            p,
        );
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
        assert!(close(rec.r1_raw, r1));
        assert!(close(rec.r_fusion, disp[2]));
        assert!(close(rec.divergence, al.divergence.total));
        assert!(close(rec.entropy, al.entropy));
        assert!(close(rec.e_mis, al.e_mis));
        assert!(close(rec.e_weighted, al.e_weighted));
        assert!(close(rec.psi, al.psi));
        assert!(close(rec.e_global, en.e_global));
        for j in 0..3 {
            assert!(close(rec.e_layers[j], en.e_layers[j]));
            for k in 0..4 {
                assert!(close(rec.costs[j][k], idx.matrix()[j][k]));
            }
        }
        assert!(close(rec.r_protocol, rp));
        assert!(close(rec.p_final, crate::cost_model::final_probability(rp, p)));
        assert!(close(rec.r_theory, al.psi + p.kappa * en.e_global));
        assert_eq!(rec.stable_fraction, al.stable.fraction);
    }

    #[test]
    fn variants_mark_absent_parts() {
        let pl = pipeline();
        let f = &descriptors(1)[0];
        let nc = assemble(&pl.features(f, ExposureLevel::None, Variant::NoConfig).unwrap(), &pl, [None; 3], Default::default());
        assert!(nc.r_cfg.is_nan() && nc.uncertainty[0].is_nan());
        assert!(nc.pairwise[0].is_nan() && !nc.pairwise[3].is_nan());
        // zero config embedding: E1 is the token term alone
        assert!((nc.e_layers[0] - pl.params.costs.rho * 12.0).abs() < 1e-15);

        let nf = assemble(&pl.features(f, ExposureLevel::None, Variant::NoFusion).unwrap(), &pl, [None; 3], Default::default());
        assert!(nf.divergence.is_nan() && nf.r_fusion.is_nan() && nf.e_layers[2].is_nan());
        assert_eq!(nf.pairwise.iter().filter(|x| !x.is_nan()).count(), 2);

        let sh = assemble(&pl.features(f, ExposureLevel::None, Variant::Shallow).unwrap(), &pl, [None; 3], Default::default());
        assert!(sh.r_cfg.is_nan() && sh.r_struct.is_nan() && !sh.r_fusion.is_nan());
        assert!(sh.pairwise[0].is_nan() && sh.pairwise[2].is_nan());
        assert_eq!(sh.pairwise.iter().filter(|x| !x.is_nan()).count(), 4);
    }

    #[test]
    fn identical_source_embeddings_give_zero_pair_divergence() {
        let mut params = pipeline().params;
        params.model.w1 = linalg::Matrix::zeros(12, 16);
        params.model.b1 = vec![0.0; 12];
        params.model.w2 = linalg::Matrix::zeros(12, 16);
        params.model.b2 = vec![0.5; 12];
        let pl = Pipeline::new(params);
        let f = &descriptors(1)[0];
        let feat = pl.features(f, ExposureLevel::None, Variant::NoFusion).unwrap();
        assert_eq!(feat.pairwise[0], 0.0);
        assert_eq!(feat.pairwise[2], 0.0);
    }

    #[test]
    fn records_do_not_depend_on_worker_count() {
        let pl = pipeline();
        let ds = descriptors(20);
        let mut opts = RunOptions {
            variants: Variant::ALL.to_vec(),
            workers: 1,
            ..Default::default()
        };
        let a = run_records(&pl, &ds, &Backend::Synthetic, &opts).unwrap();
        opts.workers = 4;
        let b = run_records(&pl, &ds, &Backend::Synthetic, &opts).unwrap();
        assert_eq!(a.len(), 20 * 2 * 5);
        assert_eq!(
            super::super::record::format_records(&a).unwrap(),
            super::super::record::format_records(&b).unwrap()
        );
    }
}
