use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use firmrisk::backends::{Backend, RemoteClient, RemoteConfig};
use firmrisk::descriptors::{self, ExposureLevel, Generator};
use firmrisk::experiments::calibrate::{self, CalibrationOutcome, FitPlan, SearchOptions, StructureSearch, Target};
use firmrisk::experiments::record::COLUMNS;
use firmrisk::experiments::{
    ablation_report, exposure_report, read_records, report, run_ablation, run_crosslayer_study,
    directional_check, run_records, write_records, Pipeline, RunOptions, Variant,
};
use firmrisk::params::{ParamsFile, BUNDLED_NAME};
use firmrisk::reasoner::Dims;
use firmrisk::{files, Error, Result};

const ENV_HELP: &str = "Environment:\n  FIRMRISK_API_KEY  credential for --backend remote (sent as a bearer token)\n  RUST_LOG          diagnostic verbosity (error, warn, info, debug)";

#[derive(Parser)]
#[command(name = "firmrisk", version, about = "Binary-free firmware risk estimation from descriptors", after_help = ENV_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a batch of synthetic descriptors.
    #[command(after_help = ENV_HELP)]
    Generate(GenerateArgs),
    /// Evaluate descriptors at one or more exposure levels and write records.
    #[command(after_help = ENV_HELP)]
    Run(RunArgs),
    /// Compute exposure, cross-layer and ablation statistics from records.
    #[command(after_help = ENV_HELP)]
    Analyze(AnalyzeArgs),
    /// Run every ablation variant and write records plus the ablation table.
    #[command(after_help = ENV_HELP)]
    Ablate(AblateArgs),
    /// Print the full record of one descriptor file.
    #[command(after_help = ENV_HELP)]
    Demo(DemoArgs),
    /// Search scalar coefficients against a target set.
    #[command(after_help = ENV_HELP)]
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of descriptors.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Base seed of the descriptor streams.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Parameter file or bundled name; its population sets dimensions and variance.
    #[arg(long, default_value = BUNDLED_NAME)]
    params: String,
    /// Override the baseline variance of both feature vectors.
    #[arg(long)]
    variance: Option<f64>,
    /// Descriptor batch file (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Synthetic,
    Remote,
}

#[derive(Args)]
struct BackendArgs {
    /// Layer backend; remote needs --endpoint and FIRMRISK_API_KEY.
    #[arg(long, value_enum, default_value = "synthetic")]
    backend: BackendKind,
    /// Chat-completion endpoint URL (remote backend).
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the endpoint (remote backend).
    #[arg(long, default_value = "default")]
    model: String,
    /// Per-request timeout in milliseconds (remote backend).
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    /// Retries after a transient failure (remote backend).
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    /// Concurrent requests (remote backend).
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

#[derive(Args)]
struct StudyArgs {
    /// Descriptor batch file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Parameter file or bundled name.
    #[arg(long, default_value = BUNDLED_NAME)]
    params: String,
    /// Comma-separated exposure levels.
    #[arg(long, default_value = "medium,high")]
    exposure: String,
    /// Seed of the perturbation streams.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Draw fresh perturbation noise per level instead of reusing one draw.
    #[arg(long)]
    unpaired: bool,
    /// Worker threads (default: logical core count).
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// Comma-separated variants: full, no_config, no_structure, no_fusion, shallow.
    #[arg(long, default_value = "full")]
    variants: String,
    /// Records file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Records file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// Report directory; receives records.csv, ablation.csv and tests.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    /// Descriptor file (default: the bundled router example).
    #[arg(long)]
    descriptor: Option<PathBuf>,
    /// Parameter file or bundled name.
    #[arg(long, default_value = BUNDLED_NAME)]
    params: String,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Output parameter file.
    #[arg(long)]
    out: PathBuf,
    /// Starting parameter file or bundled name. Ignored with --structure-trials.
    #[arg(long, default_value = BUNDLED_NAME)]
    start: String,
    /// Select layer weights and initialization among this many seeded draws first.
    #[arg(long, default_value_t = 0)]
    structure_trials: usize,
    /// Best-ranked structures fitted and validated before giving up.
    #[arg(long, default_value_t = 8)]
    candidates: usize,
    /// Target set as JSON (default: the built-in set).
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Anchor descriptor for the anchor target (default: the bundled router example).
    #[arg(long)]
    anchor: Option<PathBuf>,
    /// Total random-search proposals.
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    /// Seed of the population, the perturbations and the search.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Calibration population size.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Name recorded in the output file.
    #[arg(long, default_value = BUNDLED_NAME)]
    name: String,
    /// Write achieved residuals as JSON.
    #[arg(long)]
    residuals: Option<PathBuf>,
    /// Worker threads (default: logical core count).
    #[arg(long)]
    workers: Option<usize>,
}

fn workers(w: Option<usize>) -> usize {
    w.unwrap_or(0)
}

fn backend(a: &BackendArgs) -> Result<Backend> {
    match a.backend {
        BackendKind::Synthetic => Ok(Backend::Synthetic),
        BackendKind::Remote => {
            let endpoint = a.endpoint.clone().ok_or_else(|| {
                Error::InvalidConfig("--backend remote requires --endpoint".into())
            })?;
            let mut cfg = RemoteConfig::from_env(endpoint, a.model.clone())?;
            cfg.timeout_ms = a.timeout_ms;
            cfg.max_retries = a.max_retries;
            cfg.max_in_flight = a.max_in_flight;
            Ok(Backend::Remote(RemoteClient::new(cfg)?))
        }
    }
}

fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse())
        .collect()
}

fn study_options(s: &StudyArgs, variants: Vec<Variant>) -> Result<RunOptions> {
    Ok(RunOptions {
        levels: ExposureLevel::parse_list(&s.exposure)?,
        variants,
        seed: s.seed,
        paired: !s.unpaired,
        workers: workers(s.workers),
    })
}

fn generate(a: GenerateArgs) -> Result<()> {
    let params = ParamsFile::load(&a.params)?;
    let mut pop = params.population;
    if let Some(v) = a.variance {
        pop.baseline_variance = v;
    }
    let ds = Generator::new(pop.generator(a.n, a.seed))?.generate();
    descriptors::write_batch(&a.out, &ds)
}

fn run(a: RunArgs) -> Result<()> {
    let pl = Pipeline::new(ParamsFile::load(&a.study.params)?);
    let ds = descriptors::load_batch(&a.study.input)?;
    let opts = study_options(&a.study, parse_variants(&a.variants)?)?;
    let records = run_records(&pl, &ds, &backend(&a.study.backend)?, &opts)?;
    let failed = records.iter().filter(|r| r.backend_failure).count();
    if failed > 0 {
        log::warn!("{failed} of {} rows flagged after backend failures", records.len());
    }
    write_records(&a.out, &records)
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let records = read_records(&a.input)?;
    let has_full_levels = {
        let mut l: Vec<_> = records
            .iter()
            .filter(|r| r.variant == Variant::Full && !r.excluded)
            .map(|r| r.exposure)
            .collect();
        l.sort();
        l.dedup();
        l.len() >= 2
    };
    let exposure = if has_full_levels {
        Some(exposure_report(&records)?)
    } else {
        log::info!("fewer than two exposure levels; skipping the exposure study");
        None
    };
    let crosslayer = run_crosslayer_study(&records)?;
    let ablation = if records.iter().any(|r| r.variant != Variant::Full) {
        Some(ablation_report(&records)?)
    } else {
        None
    };
    report::write_report_dir(&a.out, exposure.as_ref(), Some(&crosslayer), ablation.as_ref())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let pl = Pipeline::new(ParamsFile::load(&a.study.params)?);
    let ds = descriptors::load_batch(&a.study.input)?;
    let opts = study_options(&a.study, Variant::ALL.to_vec())?;
    let (records, rep) = run_ablation(&pl, &ds, &backend(&a.study.backend)?, &opts)?;
    files::create_dir_all(&a.out)?;
    write_records(&a.out.join("records.csv"), &records)?;
    report::write_report_dir(&a.out, None, None, Some(&rep))
}

fn demo(a: DemoArgs) -> Result<()> {
    let pl = Pipeline::new(ParamsFile::load(&a.params)?);
    let f = match &a.descriptor {
        Some(p) => descriptors::load_descriptor(p)?,
        None => descriptors::example_router(),
    };
    let rec = pl.evaluate(&f)?;
    let fields = rec.to_fields();
    let width = COLUMNS.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (name, v) in COLUMNS.iter().zip(&fields) {
        out.push_str(&format!("{name:<width$}  {}\n", if v.is_empty() { "-" } else { v }));
    }
    print!("{out}");
    Ok(())
}

fn load_targets(path: Option<&Path>) -> Result<Vec<Target>> {
    match path {
        None => Ok(calibrate::default_targets()),
        Some(p) => Ok(serde_json::from_str(&files::read_to_string(p)?)?),
    }
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<()> {
    let w = workers(a.workers);
    let anchor = match &a.anchor {
        Some(p) => descriptors::load_descriptor(p)?,
        None => descriptors::example_router(),
    };
    let plan = FitPlan {
        targets: load_targets(a.targets.as_deref())?,
        seed: a.seed,
        anchor: Some(anchor),
        search: SearchOptions {
            budget: a.budget,
            seed: a.seed,
            closed_form_start: true,
        },
        workers: w,
    };
    let fit_one = |start: &ParamsFile| {
        let ds = Generator::new(start.population.generator(a.n, a.seed))?.generate();
        calibrate::fit(start, &ds, &plan)
    };
    let outcome = if a.structure_trials > 0 {
        let dims = Dims::default();
        let ranked = calibrate::select_structure(
            dims,
            StructureSearch {
                trials: a.structure_trials,
                seed: a.seed,
                n: a.n.min(400),
                workers: w,
            },
        )?;
        // fitted candidates are validated on a population the fit never saw
        let validation_seed = a.seed.wrapping_add(1);
        let mut fallback = None;
        let mut chosen = None;
        for cand in ranked.iter().take(a.candidates.max(1)) {
            let mut start = ParamsFile::seeded(&a.name, cand.param_seed, dims, cand.init)?;
            start.population.baseline_variance = cand.baseline_variance;
            let outcome = fit_one(&start)?;
            let check = directional_check(&outcome.params, a.n, validation_seed, w)?;
            log::info!(
                "candidate {cand:?} (gates {:.3}): residual {:.4}, holds {}: {check:?}",
                cand.gates.score(),
                outcome.residual,
                check.holds()
            );
            if check.holds() && check.config_fusion_in_band() {
                chosen = Some(outcome);
                break;
            }
            if fallback.as_ref().is_none_or(|f: &CalibrationOutcome| outcome.residual < f.residual) {
                fallback = Some(outcome);
            }
        }
        match chosen {
            Some(o) => o,
            None => {
                log::warn!("no candidate met every directional check; keeping the lowest residual");
                fallback.expect("at least one candidate")
            }
        }
    } else {
        let mut start = ParamsFile::load(&a.start)?;
        start.name = a.name.clone();
        fit_one(&start)?
    };
    log::info!(
        "residual {:.6} after {} accepted steps",
        outcome.residual,
        outcome.accepted.len() - 1
    );
    outcome.params.save(&a.out)?;
    if let Some(p) = &a.residuals {
        let mut json = serde_json::to_string_pretty(&outcome)?;
        json.push('\n');
        files::write_atomic(p, json.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Analyze(a) => analyze(a),
        Command::Ablate(a) => ablate(a),
        Command::Demo(a) => demo(a),
        Command::Calibrate(a) => calibrate_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
