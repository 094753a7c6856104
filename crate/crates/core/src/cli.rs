//! Command-line front end.
//!
//! Each subcommand resolves its settings from an optional TOML/JSON file and
//! then from flags, which win. Outputs are rendered only after the whole
//! computation succeeds, so a failed run leaves no partial files behind.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CmglError, Result};
use crate::estimate::{ols_fit, qmle_fit, Estimator, FitOptions, NewtonMethod, SampleSet};
use crate::io;
use crate::link::Link;
use crate::lrtest::{lr_test, DEFAULT_ALPHA};
use crate::portfolio::{backtest, BacktestConfig, RiskFree, DEFAULT_DENSITY, DEFAULT_SCALE};
use crate::report::{render_report, Envelope, Format, Tabular, WeightsSummary};
use crate::select::{backward_select, DEFAULT_GAMMA};
use crate::simlab::{run_part1, run_part2, Part2Config, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cmgl", version, about = "Structured covariance estimation with link functions")]
pub struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Rendering of the report on standard output.
    #[arg(long, global = true, default_value = "json")]
    pub format: Format,
    /// Leave the wall-clock runtime out of the JSON so reruns are byte-identical.
    #[arg(long, global = true)]
    pub omit_runtime: bool,
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a covariance model to a sample.
    Fit(FitArgs),
    /// Backward EBIC selection of weight matrices.
    Select(SelectArgs),
    /// Compare two link functions with the quasi-likelihood ratio test.
    Lrtest(LrArgs),
    /// Run a simulation study from a configuration file.
    Simulate(SimArgs),
    /// Rolling minimum-variance portfolio backtest.
    Portfolio(PortfolioArgs),
    /// Build weight matrices from covariates and export them as CSV.
    Weights(WeightsArgs),
}

/// Inputs shared by the model commands.
#[derive(Debug, Args)]
pub struct ModelInput {
    /// Sample CSV: header row, one replicate per row, one entity per column.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Weight specification (TOML/JSON) or a directory of dense CSV matrices.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Subtract column means before fitting.
    #[arg(long)]
    pub center: bool,
    /// TOML/JSON file with default settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: ModelInput,
    #[arg(long)]
    pub link: Option<Link>,
    #[arg(long)]
    pub estimator: Option<Estimator>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Curvature for the Newton iteration: scoring or bfgs.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: ModelInput,
    #[arg(long)]
    pub link: Option<Link>,
    #[arg(long)]
    pub estimator: Option<Estimator>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LrArgs {
    #[command(flatten)]
    pub input: ModelInput,
    #[arg(long)]
    pub link1: Option<Link>,
    #[arg(long)]
    pub link2: Option<Link>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Study to run: 1 (estimation and selection) or 2 (link test).
    #[arg(long)]
    pub part: u8,
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for the report and per-replication CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PortfolioArgs {
    /// Returns CSV: a `date` column, then one column per asset.
    #[arg(long)]
    pub returns: Option<PathBuf>,
    /// Directory with one covariate CSV per date, named `<date>.csv`.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long)]
    pub link: Option<Link>,
    #[arg(long)]
    pub estimator: Option<Estimator>,
    /// Refit each period on the EBIC-selected submodel.
    #[arg(long)]
    pub select: bool,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Risk-free rate: a number, or a CSV with one rate per holding period.
    #[arg(long)]
    pub rf: Option<String>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub density: Option<f64>,
    /// Fit the raw returns instead of cross-sectionally demeaned ones.
    #[arg(long)]
    pub no_demean: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    /// Weight specification (TOML/JSON) naming a covariate CSV.
    #[arg(long)]
    pub spec: PathBuf,
    /// Directory receiving one dense CSV per matrix and a summary JSON.
    #[arg(long)]
    pub out: PathBuf,
}

/// Model settings after merging file and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub data: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub center: bool,
    pub link: Link,
    pub link2: Link,
    pub estimator: Estimator,
    pub max_iter: usize,
    pub tol: f64,
    pub method: NewtonMethod,
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let opts = FitOptions::default();
        Self {
            data: None,
            weights: None,
            center: false,
            link: Link::Exponential,
            link2: Link::Exponential,
            estimator: Estimator::Qmle,
            max_iter: opts.max_iter,
            tol: opts.tol,
            method: opts.method,
            gamma: DEFAULT_GAMMA,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Portfolio settings after merging file and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioSettings {
    pub returns: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub link: Link,
    pub estimator: Estimator,
    pub select: bool,
    pub gamma: f64,
    pub rf: RiskFree,
    pub scale: f64,
    pub density: f64,
    pub demean: bool,
}

impl Default for PortfolioSettings {
    fn default() -> Self {
        Self {
            returns: None,
            covariates: None,
            link: Link::Exponential,
            estimator: Estimator::Qmle,
            select: false,
            gamma: DEFAULT_GAMMA,
            rf: RiskFree::default(),
            scale: DEFAULT_SCALE,
            density: DEFAULT_DENSITY,
            demean: true,
        }
    }
}

fn load_settings<T: DeserializeOwned + Default>(config: Option<&Path>) -> Result<T> {
    match config {
        Some(p) => io::read_config(p),
        None => Ok(T::default()),
    }
}

/// Paths in a configuration file are relative to that file.
fn rebase(path: Option<PathBuf>, config: Option<&Path>) -> Option<PathBuf> {
    let base = config.and_then(Path::parent);
    path.map(|p| match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    })
}

fn parse_method(s: &str) -> Result<NewtonMethod> {
    match s {
        "scoring" | "fisher_scoring" => Ok(NewtonMethod::FisherScoring),
        "bfgs" => Ok(NewtonMethod::Bfgs),
        other => Err(CmglError::input(format!("unknown method {other:?}; expected scoring or bfgs"))),
    }
}

fn model_settings(input: &ModelInput) -> Result<ModelSettings> {
    let cfg = input.config.as_deref();
    let mut s: ModelSettings = load_settings(cfg)?;
    s.data = rebase(s.data, cfg);
    s.weights = rebase(s.weights, cfg);
    if let Some(d) = &input.data {
        s.data = Some(d.clone());
    }
    if let Some(w) = &input.weights {
        s.weights = Some(w.clone());
    }
    s.center |= input.center;
    Ok(s)
}

fn load_model_inputs(s: &ModelSettings) -> Result<(SampleSet, crate::weights::WeightSet)> {
    let data = s.data.as_deref().ok_or_else(|| CmglError::input("--data is required"))?;
    let wpath = s.weights.as_deref().ok_or_else(|| CmglError::input("--weights is required"))?;
    let (_, y) = io::read_matrix_csv(data)?;
    let sample = if s.center {
        SampleSet::centered(y)?
    } else {
        SampleSet::mean_zero(y)?
    };
    let weights = io::load_weights(wpath)?;
    sample
        .check_dim(weights.dim())
        .map_err(|_| CmglError::input(format!(
            "sample has {} columns but the weights are {}x{}",
            sample.p(),
            weights.dim(),
            weights.dim()
        )))?;
    Ok((sample, weights))
}

/// A finished command: the JSON document, its rendering and extra files.
struct Output {
    json: String,
    rendered: String,
    files: Vec<(PathBuf, String)>,
}

fn finish<T: Serialize + Tabular>(
    cli: &Cli,
    mut env: Envelope<T>,
    started: Instant,
    out_file: Option<&Path>,
    extra: Vec<(PathBuf, String)>,
) -> Result<Output> {
    if !cli.omit_runtime {
        env.runtime_secs = Some(started.elapsed().as_secs_f64());
    }
    let json = io::to_json(&env)?;
    let rendered = render_report(&env, cli.format)?;
    let mut files = extra;
    if let Some(p) = out_file {
        files.push((p.to_path_buf(), json.clone()));
    }
    Ok(Output { json, rendered, files })
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn run_fit(cli: &Cli, a: &FitArgs) -> Result<Output> {
    let started = Instant::now();
    let mut s = model_settings(&a.input)?;
    if let Some(v) = a.link {
        s.link = v;
    }
    if let Some(v) = a.estimator {
        s.estimator = v;
    }
    if let Some(v) = a.max_iter {
        s.max_iter = v;
    }
    if let Some(v) = a.tol {
        s.tol = v;
    }
    if let Some(m) = &a.method {
        s.method = parse_method(m)?;
    }
    let (y, w) = load_model_inputs(&s)?;
    let opts = FitOptions {
        max_iter: s.max_iter,
        tol: s.tol,
        method: s.method,
        ..FitOptions::default()
    };
    let fit = match s.estimator {
        Estimator::Qmle => qmle_fit(&y, &w, s.link, &opts)?,
        Estimator::Ols => ols_fit(&y, &w, &opts)?,
    };
    fit.ensure_converged()?;
    let env = Envelope::new("fit", None, to_value(&s)?, fit);
    finish(cli, env, started, a.input.out.as_deref(), Vec::new())
}

fn run_select(cli: &Cli, a: &SelectArgs) -> Result<Output> {
    let started = Instant::now();
    let mut s = model_settings(&a.input)?;
    if let Some(v) = a.link {
        s.link = v;
    }
    if let Some(v) = a.estimator {
        s.estimator = v;
    }
    if let Some(v) = a.gamma {
        s.gamma = v;
    }
    let (y, w) = load_model_inputs(&s)?;
    let sel = backward_select(&y, &w, s.link, s.gamma, s.estimator)?;
    let env = Envelope::new("select", None, to_value(&s)?, sel);
    finish(cli, env, started, a.input.out.as_deref(), Vec::new())
}

fn run_lrtest(cli: &Cli, a: &LrArgs) -> Result<Output> {
    let started = Instant::now();
    let mut s = model_settings(&a.input)?;
    if let Some(v) = a.link1 {
        s.link = v;
    }
    if let Some(v) = a.link2 {
        s.link2 = v;
    }
    if let Some(v) = a.alpha {
        s.alpha = v;
    }
    let (y, w) = load_model_inputs(&s)?;
    let res = lr_test(&y, &w, s.link, s.link2, s.alpha, &FitOptions::default())?;
    let env = Envelope::new("lrtest", None, to_value(&s)?, res);
    finish(cli, env, started, a.input.out.as_deref(), Vec::new())
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CmglError::input(format!("CSV buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CmglError::input(format!("CSV buffer: {e}")))
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|v| io::format_number(*v)).collect::<Vec<_>>().join(";")
}

fn run_simulate(cli: &Cli, a: &SimArgs) -> Result<Output> {
    let started = Instant::now();
    let report_path = a.out.join("report.json");
    match a.part {
        1 => {
            let mut cfg: SimConfig = io::read_config(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            if let Some(reps) = a.reps {
                cfg.reps = reps;
            }
            let report = run_part1(&cfg)?;
            let rows = report.records.iter().map(|r| {
                let sel = r.selection;
                vec![
                    r.rep.to_string(),
                    join_floats(&r.beta_hat),
                    join_floats(&r.sd),
                    r.iterations.to_string(),
                    io::format_number(r.estimation.ee),
                    io::format_number(r.estimation.se),
                    io::format_number(r.estimation.fe),
                    r.selected
                        .as_ref()
                        .map(|s| s.indices().iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";"))
                        .unwrap_or_default(),
                    sel.map(|m| io::format_number(m.tpr)).unwrap_or_default(),
                    sel.map(|m| io::format_number(m.fdr)).unwrap_or_default(),
                    sel.map(|m| io::format_number(m.ct)).unwrap_or_default(),
                ]
            });
            let raw = csv_text(
                &["rep", "beta_hat", "sd", "iterations", "ee", "se", "fe", "selected", "tpr", "fdr", "ct"],
                rows,
            )?;
            let env = Envelope::new("simulate", Some(cfg.seed), to_value(&cfg)?, report);
            finish(cli, env, started, Some(&report_path), vec![(a.out.join("replications.csv"), raw)])
        }
        2 => {
            let mut cfg: Part2Config = io::read_config(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            if let Some(reps) = a.reps {
                cfg.reps = reps;
            }
            let report = run_part2(&cfg)?;
            let rows = report.records.iter().map(|r| {
                vec![
                    r.p.to_string(),
                    r.n.to_string(),
                    r.rep.to_string(),
                    r.alternative.name().to_string(),
                    io::format_number(r.t_lr),
                    io::format_number(r.z),
                    io::format_number(r.sigma_hat),
                    serde_json::to_value(r.decision)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default(),
                ]
            });
            let raw = csv_text(&["p", "n", "rep", "alternative", "t_lr", "z", "sigma_hat", "decision"], rows)?;
            let env = Envelope::new("simulate", Some(cfg.seed), to_value(&cfg)?, report);
            finish(cli, env, started, Some(&report_path), vec![(a.out.join("replications.csv"), raw)])
        }
        other => Err(CmglError::input(format!("--part must be 1 or 2, got {other}"))),
    }
}

fn run_portfolio(cli: &Cli, a: &PortfolioArgs) -> Result<Output> {
    let started = Instant::now();
    let cfg_path = a.config.as_deref();
    let mut s: PortfolioSettings = load_settings(cfg_path)?;
    s.returns = rebase(s.returns, cfg_path);
    s.covariates = rebase(s.covariates, cfg_path);
    if let Some(v) = &a.returns {
        s.returns = Some(v.clone());
    }
    if let Some(v) = &a.covariates {
        s.covariates = Some(v.clone());
    }
    if let Some(v) = a.link {
        s.link = v;
    }
    if let Some(v) = a.estimator {
        s.estimator = v;
    }
    s.select |= a.select;
    if let Some(v) = a.gamma {
        s.gamma = v;
    }
    if let Some(v) = &a.rf {
        s.rf = io::parse_risk_free(v)?;
    }
    if let Some(v) = a.scale {
        s.scale = v;
    }
    if let Some(v) = a.density {
        s.density = v;
    }
    if a.no_demean {
        s.demean = false;
    }
    let returns_path = s.returns.as_deref().ok_or_else(|| CmglError::input("--returns is required"))?;
    let cov_dir = s
        .covariates
        .as_deref()
        .ok_or_else(|| CmglError::input("--covariates is required"))?;
    let returns = io::read_returns(returns_path)?;
    let covariates = io::read_covariate_dir(cov_dir, &returns)?;
    let cfg = BacktestConfig {
        link: s.link,
        estimator: s.estimator,
        select: s.select,
        gamma: s.gamma,
        scale: s.scale,
        target_density: s.density,
        demean: s.demean,
        rf: s.rf.clone(),
    };
    let report = backtest(&returns, &covariates, &cfg)?;
    let env = Envelope::new("portfolio", None, to_value(&s)?, report);
    finish(cli, env, started, a.out.as_deref(), Vec::new())
}

fn run_weights(cli: &Cli, a: &WeightsArgs) -> Result<Output> {
    let started = Instant::now();
    let spec: io::WeightSpec = io::read_config(&a.spec)?;
    let base = a.spec.parent().unwrap_or(Path::new("."));
    let weights = io::build_weight_set(&spec, base)?;
    let p = weights.dim();
    let entities: Vec<String> = (0..p).map(|i| format!("e{i}")).collect();
    let width = weights.k().to_string().len();
    let mut files = Vec::new();
    let mut names = Vec::new();
    for k in 1..=weights.k() {
        let name = format!("{:0width$}_{}.csv", k, weights.names()[k - 1]);
        let mut buf = csv::Writer::from_writer(Vec::new());
        buf.write_record(&entities)?;
        let dense = weights.dense(k);
        for i in 0..p {
            buf.write_record(dense.row(i).iter().map(|v| io::format_number(*v)))?;
        }
        let bytes = buf.into_inner().map_err(|e| CmglError::input(format!("CSV buffer: {e}")))?;
        files.push((a.out.join(&name), String::from_utf8_lossy(&bytes).into_owned()));
        names.push(name);
    }
    let summary = WeightsSummary {
        p,
        names: weights.names().to_vec(),
        densities: weights.matrices().iter().map(|m| m.density()).collect(),
        files: names,
    };
    let env = Envelope::new("weights", None, to_value(&spec)?, summary);
    finish(cli, env, started, Some(&a.out.join("weights.json")), files)
}

fn execute(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Fit(a) => run_fit(cli, a),
        Command::Select(a) => run_select(cli, a),
        Command::Lrtest(a) => run_lrtest(cli, a),
        Command::Simulate(a) => run_simulate(cli, a),
        Command::Portfolio(a) => run_portfolio(cli, a),
        Command::Weights(a) => run_weights(cli, a),
    }
}

/// Exit code for an error: usage problems versus numerical failures.
pub fn exit_code(err: &CmglError) -> i32 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_COMPUTE
    }
}

/// Runs a parsed command and writes its outputs. Returns the stdout text.
pub fn run(cli: &Cli) -> Result<String> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CmglError::input("--jobs must be at least 1"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| CmglError::input(format!("cannot start worker pool: {e}")))?;
    let out = pool.install(|| execute(cli))?;
    for (path, text) in &out.files {
        io::write_text(path, text)?;
    }
    let has_out = !out.files.is_empty();
    Ok(match (cli.format, has_out) {
        (Format::Json, true) => String::new(),
        (Format::Json, false) => out.json,
        (Format::Table, _) => out.rendered,
    })
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if cli.verbose {
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("debug")).try_init();
    }
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            let kind = if e.is_usage() { "usage" } else { "computation" };
            let msg = serde_json::json!({ "error": kind, "message": e.to_string() });
            eprintln!("{msg}");
            exit_code(&e)
        }
    }
}
