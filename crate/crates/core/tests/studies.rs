use firmrisk::descriptors::{perturb_with, ExposureLevel, Generator, PerturbNoise};
use firmrisk::experiments::calibrate::{default_targets, fit, FitPlan, SearchOptions};
use firmrisk::experiments::check::{reports, CONFIG_FUSION_BAND};
use firmrisk::experiments::record::{RiskRecord, Variant};
use firmrisk::experiments::{run_crosslayer_study, Pipeline};
use firmrisk::params::ParamsFile;
use firmrisk::rng::{Purpose, Stream};

fn full_rows(n: usize, seed: u64) -> Vec<RiskRecord> {
    reports(&ParamsFile::bundled(), n, seed, 0)
        .unwrap()
        .records
        .into_iter()
        .filter(|r| r.variant == Variant::Full)
        .collect()
}

fn shuffle(xs: &mut [f64], s: &mut Stream) {
    for i in (1..xs.len()).rev() {
        let j = (s.uniform() * (i + 1) as f64) as usize;
        xs.swap(i, j.min(i));
    }
}

#[test]
fn shuffled_layer_columns_are_uncorrelated() {
    let mut rows = full_rows(1000, 42);
    let mut s = Stream::new(99, 0, Purpose::Calibration);
    let mut cols: Vec<Vec<f64>> = (0..3)
        .map(|j| rows.iter().map(|r| [r.r_cfg, r.r_struct, r.r_fusion][j]).collect())
        .collect();
    for c in &mut cols {
        shuffle(c, &mut s);
    }
    for (i, r) in rows.iter_mut().enumerate() {
        r.r_cfg = cols[0][i];
        r.r_struct = cols[1][i];
        r.r_fusion = cols[2][i];
    }
    let rep = run_crosslayer_study(&rows).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(rep.pearson.r[i][j].abs() < 0.1, "r[{i}][{j}] = {}", rep.pearson.r[i][j]);
            }
        }
    }
}

#[test]
fn config_fusion_correlation_in_band() {
    let rep = run_crosslayer_study(&full_rows(1000, 42)).unwrap();
    let r = rep.pearson.r[0][2];
    let (lo, hi) = CONFIG_FUSION_BAND;
    assert!((lo..=hi).contains(&r), "r = {r}");
    assert!(rep.pearson.p[0][2] < 0.01);
}

#[test]
fn mean_config_display_in_range() {
    let rows = full_rows(1000, 42);
    let m = rows.iter().map(|r| r.r_cfg).sum::<f64>() / rows.len() as f64;
    assert!((15.0..=78.0).contains(&m), "mean r_cfg = {m}");
}

fn level_gap(pl: &Pipeline, seed: u64, scale: f64) -> f64 {
    let params = ParamsFile::bundled();
    let ds = Generator::new(params.population.generator(300, seed)).unwrap().generate();
    let mean = |level: ExposureLevel| {
        let total: f64 = ds
            .iter()
            .map(|f| {
                let noise = PerturbNoise::draw(seed, f.id, level, true, f.k_c(), f.k_o());
                let a = scale * level.alpha();
                let b = scale * level.beta();
                let g = perturb_with(f, a, b, &noise).unwrap();
                pl.evaluate(&g).unwrap().p_final
            })
            .sum();
        total / ds.len() as f64
    };
    mean(ExposureLevel::High) - mean(ExposureLevel::Medium)
}

#[test]
fn doubling_exposure_scales_widens_gap() {
    let pl = Pipeline::new(ParamsFile::bundled());
    for seed in 1..=5 {
        let (g1, g2) = (level_gap(&pl, seed, 1.0), level_gap(&pl, seed, 2.0));
        assert!(g1 > 0.0 && g2 > g1, "seed {seed}: {g1} -> {g2}");
    }
}

#[test]
fn calibration_seeds_reach_similar_residuals() {
    let start = ParamsFile::bundled();
    let ds = Generator::new(start.population.generator(150, 3)).unwrap().generate();
    let residual = |seed: u64| {
        let plan = FitPlan {
            targets: default_targets(),
            seed: 3,
            anchor: Some(firmrisk::descriptors::example_router()),
            search: SearchOptions {
                budget: 1500,
                seed,
                closed_form_start: true,
            },
            workers: 0,
        };
        fit(&start, &ds, &plan).unwrap().residual
    };
    let (a, b) = (residual(11), residual(12));
    assert!(a.max(b) <= 2.0 * a.min(b), "{a} vs {b}");
}

#[test]
fn generated_covariance_matches_identity() {
    use firmrisk::descriptors::GeneratorConfig;
    let ds = Generator::new(GeneratorConfig::standard(10_000, 5, 16, 16)).unwrap().generate();
    let k = 16;
    let n = ds.len() as f64;
    let mean: Vec<f64> = (0..k).map(|j| ds.iter().map(|f| f.config[j]).sum::<f64>() / n).collect();
    let mut frob = 0.0;
    for i in 0..k {
        for j in 0..k {
            let cov = ds
                .iter()
                .map(|f| (f.config[i] - mean[i]) * (f.config[j] - mean[j]))
                .sum::<f64>()
                / (n - 1.0);
            let want = if i == j { 1.0 } else { 0.0 };
            frob += (cov - want).powi(2);
        }
    }
    assert!(frob.sqrt() <= 0.15 * (k as f64).sqrt(), "distance {}", frob.sqrt());
}

#[test]
fn report_matches_second_pass_over_records_file() {
    use firmrisk::experiments::exposure_report;
    use firmrisk::experiments::record::{read_records, write_records};
    use firmrisk::stats::welch_t;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let mut rows = full_rows(200, 7);
    rows[3].excluded = true;
    rows[3].backend_failure = true;
    write_records(&path, &rows).unwrap();
    let back = read_records(&path).unwrap();
    let rep = exposure_report(&back).unwrap();
    assert_eq!(rep.accounting.rows_total, rep.accounting.rows_included + rep.accounting.rows_excluded);
    assert_eq!(rep.accounting.rows_excluded, 1);

    let col = |level: ExposureLevel| -> Vec<f64> {
        back.iter()
            .filter(|r| r.exposure == level && !r.excluded)
            .map(|r| r.p_final)
            .collect()
    };
    for level in [ExposureLevel::Medium, ExposureLevel::High] {
        let x = col(level);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let s = rep
            .summaries
            .iter()
            .find(|s| s.level == level && s.metric == "p_final")
            .unwrap();
        assert_eq!(s.summary.n, x.len());
        assert!((s.summary.mean - mean).abs() <= 1e-9);
    }
    let (m, h) = (col(ExposureLevel::Medium), col(ExposureLevel::High));
    let (mm, mh) = (m.iter().sum::<f64>() / m.len() as f64, h.iter().sum::<f64>() / h.len() as f64);
    let (vm, vh) = (
        m.iter().map(|v| (v - mm).powi(2)).sum::<f64>() / (m.len() - 1) as f64,
        h.iter().map(|v| (v - mh).powi(2)).sum::<f64>() / (h.len() - 1) as f64,
    );
    let t = (mh - mm) / (vm / m.len() as f64 + vh / h.len() as f64).sqrt();
    let c = rep.comparison(ExposureLevel::Medium, ExposureLevel::High, "p_final").unwrap();
    assert!((c.welch.statistic - t).abs() <= 1e-9 * (1.0 + t.abs()));
    assert!((c.welch.statistic - welch_t(&m, &h).unwrap().statistic).abs() <= 1e-12);
    assert!((c.relative_increase - (mh - mm) / mm).abs() <= 1e-9);
}
