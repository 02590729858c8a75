//! Command-line front end. Every subcommand resolves a JSON config plus flag
//! overrides, validates it before touching the output directory, and writes
//! its artifacts together with a manifest echoing the resolved config.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::csv_io::{load_trial_csv, write_trial_csv, CsvSchema};
use crate::diagnostics::{ess_heuristic, mixture_decomposition, write_ess_csv, write_mixture_csv, StrataSpec};
use crate::error::{Error, Result};
use crate::estimands::{write_theta_csv, ContrastKind};
use crate::estimators::{
    delta_ratio, parse_methods, AvailabilitySource, EstimateReport, EstimationConfig, Estimator, Method, Variant,
};
use crate::harness::{
    a7_scenario_grid, emit_ratios, emit_results, parse_regime, regime_label, run_study_with, se_ratio_study, with_workers,
    Manifest, MetricsRow, ScenarioConfig, Specification, TruthCache,
};
use crate::simulation::{gen_trial, misspecify, truth_oracle, AvailabilityRegime};

#[derive(Debug, Parser)]
#[command(name = "platform-rmst", version, about = "Restricted-mean survival contrasts for platform trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the restricted-mean difference on a subject-level CSV.
    Estimate(EstimateArgs),
    /// Generate one simulated trial.
    Simulate(SimArgs),
    /// Monte Carlo study over a concurrent-fraction grid.
    Study(StudyArgs),
    /// Standard-error ratios of concurrent-only to pooled estimators.
    RatioStudy(StudyArgs),
    /// Pooling assumption × model specification grid.
    A7Grid(A7Args),
    /// Pooling diagnostics on a subject-level CSV.
    Diagnose(DiagnoseArgs),
    /// Oracle truth for one generator setting.
    Truth(TruthArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Subject-level CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub tau: Option<usize>,
    /// Comma-separated methods (OR_oc, OR_ac, DR_oc, DR_ac, naive).
    #[arg(long)]
    pub methods: Option<String>,
    /// det: availability fixed by entry time; stoch: probabilities in the schema's column.
    #[arg(long)]
    pub availability: Option<String>,
    #[arg(long)]
    pub bootstrap_b: Option<usize>,
    /// Curve contrast to report from the doubly robust curves, e.g. recovery-ratio.
    #[arg(long)]
    pub contrast: Option<ContrastKind>,
    /// Period at which the contrast is evaluated (defaults to tau).
    #[arg(long)]
    pub at: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub availability: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated concurrent fractions.
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated horizons.
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub availability: Option<String>,
    #[arg(long)]
    pub bootstrap_b: Option<usize>,
    /// Draws per oracle truth.
    #[arg(long)]
    pub truth_reps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct A7Args {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Shift of the concurrent control event logit in the violated cells.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tau: Option<usize>,
    /// Oracle draws.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub availability: Option<String>,
}

/// File-level configuration; every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub estimation: EstimationConfig,
    pub schema: CsvSchema,
    pub scenario: ScenarioConfig,
    pub strata: StrataSpec,
    pub a7_gamma: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("cannot parse {what} `{s}`"))))
        .collect()
}

fn apply_study_flags(mut sc: ScenarioConfig, a: &StudyArgs) -> Result<ScenarioConfig> {
    if let Some(s) = a.common.seed {
        sc.master_seed = s;
    }
    if let Some(r) = &a.rho {
        sc.rho_grid = parse_list(r, "rho")?;
    }
    if let Some(r) = a.reps {
        sc.reps = r;
    }
    if let Some(t) = &a.tau {
        sc.tau_list = parse_list(t, "tau")?;
    }
    if let Some(m) = &a.methods {
        sc.methods = parse_methods(m)?;
    }
    if let Some(s) = &a.spec {
        sc.specification = s.parse()?;
    }
    if let Some(av) = &a.availability {
        sc.dgp.availability = parse_regime(av)?;
    }
    if let Some(b) = a.bootstrap_b {
        sc.bootstrap_b = b;
    }
    if let Some(t) = a.truth_reps {
        sc.truth_reps = t;
    }
    sc.validate()?;
    Ok(sc)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_manifest(dir: &Path, command: &str, seed: u64, config: &impl Serialize, outputs: &[&str]) -> Result<()> {
    Manifest::new(command, seed, config, outputs)?.write(&dir.join("manifest.json"))
}

fn workers(c: &Common) -> usize {
    c.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn print_metrics(rows: &[MetricsRow]) {
    println!(
        "{:<9} {:<8} {:<7} {:>4} {:>4} {:>9} {:>9} {:>9} {:>9} {:>6} {:>5}",
        "scenario", "spec", "method", "rho", "tau", "bias^2", "variance", "mse", "coverage", "ratio", "fail"
    );
    for r in rows {
        println!(
            "{:<9} {:<8} {:<7} {:>4.2} {:>4} {:>9.5} {:>9.5} {:>9.5} {:>9.3} {:>6} {:>5}{}",
            r.scenario,
            r.specification.as_str(),
            r.method.as_str(),
            r.rho,
            r.tau,
            r.bias_sq,
            r.variance_sample,
            r.mse,
            r.coverage,
            r.se_ratio.map(|x| format!("{x:.3}")).unwrap_or_default(),
            r.failures,
            if r.flagged { " *" } else { "" }
        );
    }
}

#[derive(Debug, Serialize)]
struct EstimateResolved<'a> {
    data: &'a Path,
    estimation: &'a EstimationConfig,
    schema: &'a CsvSchema,
    methods: &'a [Method],
    contrast: Option<ContrastKind>,
    at: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportLine {
    method: Method,
    estimand: String,
    estimate: f64,
    se: f64,
    ci_lo: f64,
    ci_hi: f64,
    p_value: f64,
    se_source: String,
    fallback: bool,
    truncated: usize,
}

impl From<&EstimateReport> for ReportLine {
    fn from(r: &EstimateReport) -> Self {
        Self {
            method: r.method,
            estimand: r.estimand.to_string(),
            estimate: r.estimate,
            se: r.se,
            ci_lo: r.ci_lo,
            ci_hi: r.ci_hi,
            p_value: r.p_value,
            se_source: serde_json::to_value(r.se_source)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            fallback: r.meta.fallback,
            truncated: r.meta.truncated,
        }
    }
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let fc = load_config(a.common.config.as_deref())?;
    let mut cfg = fc.estimation;
    let mut schema = fc.schema;
    if let Some(t) = a.tau {
        cfg.tau = t;
    }
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.bootstrap_b {
        cfg.bootstrap_b = b;
    }
    match a.availability.as_deref().map(parse_regime).transpose()? {
        Some(AvailabilityRegime::Deterministic) => cfg.nuisance.availability = AvailabilitySource::Design,
        Some(AvailabilityRegime::Stochastic) => {
            cfg.nuisance.availability = AvailabilitySource::KnownProbability;
            schema.availability_prob.get_or_insert_with(|| "p_avail".into());
        }
        None => {}
    }
    let methods = match &a.methods {
        Some(m) => parse_methods(m)?,
        None => Method::ALL.to_vec(),
    };
    let loaded = load_trial_csv(&a.data, &schema)?;
    let data = loaded.data;
    cfg.validate(data.k)?;
    let at = a.at.unwrap_or(cfg.tau);
    if a.contrast.is_some() && !(1..=cfg.tau).contains(&at) {
        return Err(Error::Config(format!("contrast period {at} outside 1..={}", cfg.tau)));
    }

    let mut est = with_workers(workers(&a.common), || -> Result<_> {
        let mut est = Estimator::new(&data, &cfg)?;
        let results = est.estimate(&methods);
        let curves = est.influence(Variant::Oc);
        let contrast = match (a.contrast, &curves) {
            (Some(kind), Ok(terms)) => {
                Some(delta_ratio(&terms.treated_curve, &terms.control_curve, at, kind, Method::DrOc, Default::default())?)
            }
            (Some(_), Err(e)) => return Err(Error::Config(format!("contrast needs the doubly robust curves: {e}"))),
            (None, _) => None,
        };
        Ok((results, contrast, curves.ok()))
    })??;

    let mut lines = Vec::new();
    let mut first_err = None;
    for (m, r) in &est.0 {
        match r {
            Ok(r) => lines.push(ReportLine::from(r)),
            Err(e) => {
                eprintln!("{m}: {e}");
                first_err.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if let Some(c) = est.1.take() {
        lines.push(ReportLine::from(&c));
    }
    if lines.is_empty() {
        return Err(first_err.map_or(Error::Config("no estimates".into()), Error::Config));
    }

    prepare_out(&a.common.out)?;
    let path = a.common.out.join("estimates.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for l in &lines {
        w.serialize(l)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let mut outputs = vec!["estimates.csv"];
    if let Some(terms) = &est.2 {
        let curves = [
            crate::estimands::ThetaCurve::from_values(1, &terms.treated_curve.estimates[1..], crate::estimands::CONCURRENT, "DR_oc"),
            crate::estimands::ThetaCurve::from_values(0, &terms.control_curve.estimates[1..], crate::estimands::CONCURRENT, "DR_oc"),
        ];
        let p = a.common.out.join("theta.csv");
        write_theta_csv(fs::File::create(&p).map_err(|e| Error::io(&p, e))?, &curves)?;
        outputs.push("theta.csv");
    }
    let resolved = EstimateResolved {
        data: &a.data,
        estimation: &cfg,
        schema: &schema,
        methods: &methods,
        contrast: a.contrast,
        at: a.contrast.map(|_| at),
    };
    write_manifest(&a.common.out, "estimate", cfg.seed, &resolved, &outputs)?;

    println!("n = {}, concurrent = {}, K = {}", data.n(), data.subjects.iter().filter(|s| s.v_tilde).count(), data.k);
    if loaded.filtered_other_arms > 0 {
        println!("{} rows from other arms ignored", loaded.filtered_other_arms);
    }
    println!("{:<7} {:<22} {:>9} {:>8} {:>20} {:>8}", "method", "estimand", "estimate", "SE", "95% CI", "p");
    for l in &lines {
        println!(
            "{:<7} {:<22} {:>9.4} {:>8.4} {:>20} {:>8.4}",
            l.method.as_str(),
            l.estimand,
            l.estimate,
            l.se,
            format!("[{:.4}, {:.4}]", l.ci_lo, l.ci_hi),
            l.p_value
        );
    }
    Ok(())
}

fn simulate(a: &SimArgs) -> Result<()> {
    let fc = load_config(a.common.config.as_deref())?;
    let mut dgp = fc.scenario.dgp.clone();
    if let Some(r) = a.rho {
        dgp.rho = r;
    }
    if let Some(s) = a.common.seed {
        dgp.seed = s;
    }
    if let Some(av) = &a.availability {
        dgp.availability = parse_regime(av)?;
    }
    let spec: Specification = a.spec.as_deref().map(str::parse).transpose()?.unwrap_or(Specification::Correct);
    dgp.validate()?;
    let mut data = gen_trial(&dgp)?;
    if spec == Specification::Misspecified {
        data = misspecify(&data, fc.scenario.misspec_rate, crate::rng::derive_seed(dgp.seed, &[0x3157]))?;
    }
    prepare_out(&a.common.out)?;
    write_trial_csv(a.common.out.join("data.csv"), &data)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        dgp: &'a crate::simulation::DgpConfig,
        specification: Specification,
        misspec_rate: f64,
    }
    let resolved = Resolved { dgp: &dgp, specification: spec, misspec_rate: fc.scenario.misspec_rate };
    write_manifest(&a.common.out, "simulate", dgp.seed, &resolved, &["data.csv"])?;
    println!(
        "n = {}, concurrent fraction = {:.3}, events = {}",
        data.n(),
        data.concurrent_fraction(),
        data.subjects.iter().filter(|s| s.delta).count()
    );
    Ok(())
}

fn study(a: &StudyArgs) -> Result<()> {
    let fc = load_config(a.common.config.as_deref())?;
    let sc = apply_study_flags(fc.scenario, a)?;
    let rows = with_workers(workers(&a.common), || run_study_with(&sc, &TruthCache::default()))??;
    prepare_out(&a.common.out)?;
    emit_results(&rows, &a.common.out.join("results.csv"))?;
    write_manifest(&a.common.out, "study", sc.master_seed, &sc, &["results.csv"])?;
    print_metrics(&rows);
    Ok(())
}

fn ratio_study(a: &StudyArgs) -> Result<()> {
    let fc = load_config(a.common.config.as_deref())?;
    let mut sc = fc.scenario;
    if a.methods.is_none() {
        sc.methods = vec![Method::OrOc, Method::OrAc, Method::DrOc, Method::DrAc];
    }
    let sc = apply_study_flags(sc, a)?;
    let regimes = match &a.availability {
        Some(_) => vec![sc.dgp.availability],
        None => vec![AvailabilityRegime::Deterministic, AvailabilityRegime::Stochastic],
    };
    let rows = with_workers(workers(&a.common), || se_ratio_study(&sc, &regimes))??;
    prepare_out(&a.common.out)?;
    emit_ratios(&rows, &a.common.out.join("ratios.csv"))?;
    write_manifest(&a.common.out, "ratio-study", sc.master_seed, &sc, &["ratios.csv"])?;
    println!("{:<6} {:<8} {:>4} {:>4} {:<4} {:>8} {:>6}", "regime", "spec", "rho", "tau", "pair", "ratio", "pairs");
    for r in &rows {
        println!(
            "{:<6} {:<8} {:>4.2} {:>4} {:<4} {:>8.4} {:>6}",
            r.regime,
            r.specification.as_str(),
            r.rho,
            r.tau,
            r.pair,
            r.mean_ratio,
            r.pairs
        );
    }
    Ok(())
}

fn a7_grid(a: &A7Args) -> Result<()> {
    let fc = load_config(a.study.common.config.as_deref())?;
    let mut sc = fc.scenario;
    // the pooling assumption is only testable when availability is not fixed by entry time
    if a.study.availability.is_none() && a.study.common.config.is_none() {
        sc.dgp.availability = AvailabilityRegime::Stochastic;
    }
    let sc = apply_study_flags(sc, &a.study)?;
    let gamma = a.gamma.or(fc.a7_gamma).unwrap_or(0.5);
    #[derive(Serialize)]
    struct Resolved<'a> {
        scenario: &'a ScenarioConfig,
        gamma: f64,
    }
    let rows = with_workers(workers(&a.study.common), || a7_scenario_grid(&sc, gamma, &TruthCache::default()))??;
    prepare_out(&a.study.common.out)?;
    emit_results(&rows, &a.study.common.out.join("a7_grid.csv"))?;
    write_manifest(&a.study.common.out, "a7-grid", sc.master_seed, &Resolved { scenario: &sc, gamma }, &["a7_grid.csv"])?;
    print_metrics(&rows);
    println!("regime: {}", regime_label(sc.dgp.availability));
    Ok(())
}

fn diagnose(a: &DiagnoseArgs) -> Result<()> {
    let fc = load_config(a.common.config.as_deref())?;
    let data = load_trial_csv(&a.data, &fc.schema)?.data;
    let table = data.person_period()?;
    let mixture = mixture_decomposition(&table, &fc.strata)?;
    let ess = ess_heuristic(&table)?;
    prepare_out(&a.common.out)?;
    let mp = a.common.out.join("mixture.csv");
    write_mixture_csv(fs::File::create(&mp).map_err(|e| Error::io(&mp, e))?, &mixture)?;
    let ep = a.common.out.join("ess.csv");
    write_ess_csv(fs::File::create(&ep).map_err(|e| Error::io(&ep, e))?, &ess)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        data: &'a Path,
        schema: &'a CsvSchema,
        strata: &'a StrataSpec,
    }
    let resolved = Resolved { data: &a.data, schema: &fc.schema, strata: &fc.strata };
    write_manifest(&a.common.out, "diagnose", 0, &resolved, &["mixture.csv", "ess.csv"])?;
    if mixture.availability_determined_by_entry {
        println!("availability is a threshold in entry time: no stratum holds both kinds of control");
    }
    println!(
        "evaluable strata: {}, suspect share: {}",
        mixture.evaluable().count(),
        mixture.suspect_fraction().map_or("n/a".into(), |f| format!("{f:.3}"))
    );
    println!("{:>3} {:>8} {:>8} {:>8}", "m", "c_pool", "c_conc", "ratio");
    for r in &ess.rows {
        println!("{:>3} {:>8.4} {:>8.4} {:>8.3}", r.m, r.c_pool, r.c_conc, r.ratio);
    }
    Ok(())
}

fn truth(a: &TruthArgs) -> Result<()> {
    let fc = load_config(a.common.config.as_deref())?;
    let mut dgp = fc.scenario.dgp.clone();
    if let Some(r) = a.rho {
        dgp.rho = r;
    }
    if let Some(s) = a.common.seed {
        dgp.seed = s;
    }
    if let Some(av) = &a.availability {
        dgp.availability = parse_regime(av)?;
    }
    let tau = a.tau.unwrap_or(fc.estimation.tau);
    let reps = a.reps.unwrap_or(fc.scenario.truth_reps);
    let t = with_workers(workers(&a.common), || truth_oracle(&dgp, tau, reps))??;
    prepare_out(&a.common.out)?;
    let tp = a.common.out.join("truth.json");
    fs::write(&tp, serde_json::to_string_pretty(&t)? + "\n").map_err(|e| Error::io(&tp, e))?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        dgp: &'a crate::simulation::DgpConfig,
        tau: usize,
        reps: usize,
    }
    write_manifest(&a.common.out, "truth", dgp.seed, &Resolved { dgp: &dgp, tau, reps }, &["truth.json"])?;
    println!(
        "dRMST(tau={tau}) = {:.5} (se {:.5}); E[min(T1,tau) - min(T0,tau)] = {:.5} (se {:.5})",
        t.drmst, t.drmst_se, t.drmst_min_diff, t.drmst_min_diff_se
    );
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Study(a) => study(a),
        Command::RatioStudy(a) => ratio_study(a),
        Command::A7Grid(a) => a7_grid(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Truth(a) => truth(a),
    }
}

/// Parses the process arguments, runs, and returns the exit status. Failures
/// print one line `error[<category>]: <message>` to standard error.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{}]: {}", cat.as_str(), e.to_string().replace('\n', " "));
            cat.exit_code()
        }
    }
}
