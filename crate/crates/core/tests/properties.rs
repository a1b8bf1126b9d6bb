use proptest::prelude::*;

use firmrisk::alignment::{
    divergence_gradient, divergence_unnormalized, entropy, kl, misalignment_energy, normalize,
};
use firmrisk::cost_model::{conceptual_energy_from, final_probability, weighted_vector};
use firmrisk::reasoner::{
    forward, forward_structure, fuse, fusion_probability, fusion_probability_gradient, Dims, InitOptions,
    ModelParams,
};
use firmrisk::params::ParamsFile;
use firmrisk::stats::{anova_oneway, average_ranks, pearson, spearman, welch_t};
use firmrisk::stats::special::t_two_sided;

fn positive(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n)
}

fn sample(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, n)
}

fn nonconstant(x: &[f64]) -> bool {
    x.iter().any(|v| (v - x[0]).abs() > 1e-6)
}

fn monotone(seed: u64) -> ModelParams {
    let init = InitOptions {
        monotone: true,
        ..InitOptions::default()
    };
    ModelParams::seeded(seed, Dims::default(), init).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gibbs_inequality(x in positive(8), y in positive(8)) {
        let (p, q) = (normalize(&x).unwrap(), normalize(&y).unwrap());
        prop_assert!(kl(&p, &q).unwrap() >= -1e-12);
        prop_assert!(kl(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn entropy_is_bounded_by_log_dimension(x in positive(12)) {
        let h = entropy(&x).unwrap();
        prop_assert!(h >= 0.0 && h <= 12f64.ln() + 1e-12);
    }

    #[test]
    fn misalignment_energy_is_midpoint_convex(
        h1 in positive(6), h2 in positive(6), a in positive(6), b in positive(6),
    ) {
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let lhs = misalignment_energy(&h1, &h2, &mid);
        let rhs = 0.5 * misalignment_energy(&h1, &h2, &a) + 0.5 * misalignment_energy(&h1, &h2, &b);
        prop_assert!(lhs <= rhs + 1e-9);
        prop_assert!(misalignment_energy(&h1, &h2, &a) >= 0.0);
    }

    #[test]
    fn divergence_gradient_matches_central_difference(
        h1 in positive(5), h2 in positive(5), h3 in positive(5), i in 0usize..5,
    ) {
        let g = divergence_gradient(&h1, &h2, &h3)[i];
        let step = 1e-5 * h3[i];
        let at = |d: f64| {
            let mut h = h3.clone();
            h[i] += d;
            divergence_unnormalized(&h1, &h2, &h)
        };
        let fd = (at(step) - at(-step)) / (2.0 * step);
        prop_assert!((g - fd).abs() <= 1e-4 * (1.0 + fd.abs()), "{g} vs {fd}");
    }

    #[test]
    fn layer_ranges_hold(seed in 0u64..1000, c in sample(16..17), o in sample(16..17)) {
        let p = ModelParams::seeded(seed, Dims::default(), InitOptions::default()).unwrap();
        let e = forward(&c, &o, &p).unwrap();
        prop_assert!(e.h1.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(e.h2.iter().all(|&v| v >= 0.0));
        let pf = fusion_probability(&e.h3, &p);
        prop_assert!((0.0..=1.0).contains(&pf));
    }

    #[test]
    fn relu_identity_with_zero_bias(seed in 0u64..1000, o in sample(16..17)) {
        let mut p = ModelParams::seeded(seed, Dims::default(), InitOptions::default()).unwrap();
        p.b2 = vec![0.0; p.b2.len()];
        let neg: Vec<f64> = o.iter().map(|v| -v).collect();
        let plus = forward_structure(&o, &p).unwrap();
        let minus = forward_structure(&neg, &p).unwrap();
        let z = p.w2.mul_vec(&o).unwrap();
        for k in 0..z.len() {
            prop_assert!((plus[k] + minus[k] - z[k].abs()).abs() <= 1e-9 * (1.0 + z[k].abs()));
        }
    }

    #[test]
    fn fusion_gradient_matches_central_difference(seed in 0u64..1000, h3 in positive(12), i in 0usize..12) {
        let p = ModelParams::seeded(seed, Dims::default(), InitOptions::default()).unwrap();
        let g = fusion_probability_gradient(&h3, &p)[i];
        let step = 1e-6;
        let at = |d: f64| {
            let mut h = h3.clone();
            h[i] += d;
            fusion_probability(&h, &p)
        };
        let fd = (at(step) - at(-step)) / (2.0 * step);
        prop_assert!((g - fd).abs() <= 1e-5 * g.abs() + 1e-9, "{g} vs {fd}");
    }

    #[test]
    fn fusion_probability_is_monotone_in_config_embedding(
        h1 in prop::collection::vec(0.0f64..1.0, 12), h2 in prop::collection::vec(0.0f64..3.0, 12),
        k in 0usize..12, bump in 0.001f64..0.5,
    ) {
        let p = ParamsFile::bundled().model;
        let before = fusion_probability(&fuse(&h1, &h2, &p).unwrap(), &p);
        let mut up = h1.clone();
        up[k] += bump;
        prop_assert!(fusion_probability(&fuse(&up, &h2, &p).unwrap(), &p) >= before);
    }

    #[test]
    fn nonnegative_config_weights_make_config_monotone(
        c in sample(16..17), o in sample(16..17), k in 0usize..16, bump in 0.01f64..5.0,
    ) {
        let mut p = ParamsFile::bundled().model;
        p.w1 = p.w1.map(f64::abs);
        let before = fusion_probability(&forward(&c, &o, &p).unwrap().h3, &p);
        let mut c2 = c.clone();
        c2[k] += bump;
        prop_assert!(fusion_probability(&forward(&c2, &o, &p).unwrap().h3, &p) >= before);
    }

    #[test]
    fn divergence_direction_raises_fusion_probability_above_midpoint(
        h1 in positive(12), h2 in positive(12), lift in prop::collection::vec(0.01f64..5.0, 12), step in 1e-4f64..1e-2,
    ) {
        // h3 above the midpoint of h1 and h2 in every coordinate, unnormalized
        let h3: Vec<f64> = (0..12).map(|i| 0.5 * (h1[i] + h2[i]) + lift[i]).collect();
        let p = ParamsFile::bundled().model;
        let g = divergence_gradient(&h1, &h2, &h3);
        let moved: Vec<f64> = h3.iter().zip(&g).map(|(x, d)| x + step * d).collect();
        prop_assert!(divergence_unnormalized(&h1, &h2, &moved) >= divergence_unnormalized(&h1, &h2, &h3));
        prop_assert!(fusion_probability(&moved, &p) >= fusion_probability(&h3, &p));
    }

    #[test]
    fn final_probability_is_monotone_in_aggregate(seed in 0u64..1000, r in -100.0f64..100.0, d in 0.0f64..50.0) {
        let p = monotone(seed);
        prop_assert!(final_probability(r + d, &p) >= final_probability(r, &p));
    }

    #[test]
    fn weighted_vector_matches_triple_loop(c in prop::collection::vec(0.0f64..100.0, 12), w in prop::collection::vec(0.0f64..2.0, 3)) {
        let m = [
            [c[0], c[1], c[2], c[3]],
            [c[4], c[5], c[6], c[7]],
            [c[8], c[9], c[10], c[11]],
        ];
        let v = weighted_vector(&m, [w[0], w[1], w[2]]);
        for k in 0..4 {
            let mut s = 0.0;
            for i in 0..3 {
                s += m[i][k] * w[i];
            }
            prop_assert!((v[k] - s).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn energy_grows_with_latency_and_cpu(
        l in 0.0f64..500.0, c in 0.0f64..500.0, g in 0.0f64..500.0, t in 0.0f64..100.0, dl in 0.0f64..50.0, dc in 0.0f64..50.0,
    ) {
        let e = conceptual_energy_from(l, c, g, t, 1.0, 0.01);
        prop_assert!(conceptual_energy_from(l + dl, c, g, t, 1.0, 0.01) >= e);
        prop_assert!(conceptual_energy_from(l, c + dc, g, t, 1.0, 0.01) >= e);
    }

    #[test]
    fn pearson_is_invariant_under_positive_affine_maps(
        x in sample(5..40), a in 0.1f64..10.0, b in -20.0f64..20.0, seed in 0u64..1000,
    ) {
        prop_assume!(nonconstant(&x));
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() * 10.0 + ((i as u64 + seed) % 7) as f64).collect();
        prop_assume!(nonconstant(&y));
        let r = pearson(&x, &y).unwrap().statistic;
        let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((pearson(&x2, &y).unwrap().statistic - r).abs() < 1e-9);
    }

    #[test]
    fn welch_is_shift_invariant(x in sample(3..30), y in sample(3..30), shift in -100.0f64..100.0) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let t = welch_t(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let u = welch_t(&xs, &ys).unwrap();
        prop_assert!((t.statistic - u.statistic).abs() <= 1e-8 * (1.0 + t.statistic.abs()));
        prop_assert!((t.df - u.df).abs() <= 1e-8 * t.df);
    }

    #[test]
    fn anova_is_affine_invariant(x in sample(3..20), y in sample(3..20), a in 0.1f64..10.0, b in -20.0f64..20.0) {
        prop_assume!(nonconstant(&x) || nonconstant(&y));
        let f = anova_oneway(&[&x, &y]).unwrap().statistic;
        let m = |v: &[f64]| v.iter().map(|z| a * z + b).collect::<Vec<_>>();
        let g = anova_oneway(&[&m(&x), &m(&y)]).unwrap().statistic;
        prop_assert!((f - g).abs() <= 1e-7 * (1.0 + f.abs()));
    }

    #[test]
    fn t_p_value_decreases_with_statistic(t in 0.0f64..20.0, dt in 0.001f64..5.0, df in 1.0f64..200.0) {
        prop_assert!(t_two_sided(t + dt, df) <= t_two_sided(t, df) + 1e-15);
    }

    #[test]
    fn spearman_equals_pearson_on_ranks(x in sample(3..40), y in sample(3..40)) {
        let n = x.len().min(y.len());
        let (x, y) = (&x[..n], &y[..n]);
        prop_assume!(nonconstant(x) && nonconstant(y));
        let (rx, ry) = (average_ranks(x), average_ranks(y));
        let s = spearman(x, y).unwrap().statistic;
        prop_assert!((s - pearson(&rx, &ry).unwrap().statistic).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbation_is_proportional_to_scale(id in 0u64..10_000, seed in 0u64..1000, a in 0.01f64..3.0) {
        use firmrisk::descriptors::{example_router, perturb_with, ExposureLevel, PerturbNoise};
        let mut f = example_router();
        f.id = id;
        let noise = PerturbNoise::draw(seed, id, ExposureLevel::High, true, f.k_c(), f.k_o());
        let one = perturb_with(&f, 1.0, 1.0, &noise).unwrap();
        let scaled = perturb_with(&f, a, a, &noise).unwrap();
        for k in 0..f.k_c() {
            let (d1, da) = (one.config[k] - f.config[k], scaled.config[k] - f.config[k]);
            prop_assert!((da - a * d1).abs() <= 1e-9 * (1.0 + f.config[k].abs()));
        }
    }
}
