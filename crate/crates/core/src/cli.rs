//! Command-line front end: `detect`, `generate`, `mc`, `nab`, `figure`.
//!
//! Shared flags may also come from a JSON file passed with `--config`;
//! explicit flags win over the file, which wins over built-in defaults.
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{self, DetectorConfig, ScanMode};
use crate::environments::{RngSpec, Scenario, ScenarioSpec, LINEAR_IN_S_C};
use crate::harness::{self, McRow, Policy};
use crate::nab::{self, DEFAULT_CHANGES};
use crate::types::{Environment, TimeSeries};
use crate::vector::{self, VectorDetectorConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "atc", version, about = "Anytime Tracking CUSUM experiments")]
pub struct Cli {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedArgs {
    /// Sub-Gaussian noise scale σ (default 1)
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Overall false-alarm level α (default 0.05)
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Base seed; replication i uses seed + i (default 0)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Split scan (default full)
    #[arg(long, global = true, value_enum)]
    pub scan: Option<ScanArg>,
    /// Offset base for the multiscale scan (default 2)
    #[arg(long, global = true)]
    pub base: Option<f64>,
    /// Output path (file, or directory for `figure`)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for replications
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with any of the shared flags
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanArg {
    Full,
    Multiscale,
}

/// Shared settings after merging flags, config file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub sigma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub scan: ScanArg,
    pub base: f64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl SharedArgs {
    pub fn resolve(&self) -> Result<Settings, CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<SharedArgs>(&text)
                    .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
            }
            None => SharedArgs::default(),
        };
        let s = Settings {
            sigma: self.sigma.or(file.sigma).unwrap_or(1.0),
            alpha: self.alpha.or(file.alpha).unwrap_or(0.05),
            seed: self.seed.or(file.seed).unwrap_or(0),
            scan: self.scan.or(file.scan).unwrap_or(ScanArg::Full),
            base: self.base.or(file.base).unwrap_or(2.0),
            out: self.out.clone().or(file.out),
            threads: self.threads.or(file.threads),
        };
        if s.threads == Some(0) {
            return Err(usage("--threads must be at least 1"));
        }
        Ok(s)
    }
}

impl Settings {
    pub fn scan_mode(&self) -> ScanMode {
        match self.scan {
            ScanArg::Full => ScanMode::Full,
            ScanArg::Multiscale => ScanMode::Multiscale { base: self.base },
        }
    }

    pub fn detector_config(&self) -> Result<DetectorConfig, CliError> {
        DetectorConfig::new(self.sigma, self.alpha)
            .and_then(|c| c.with_scan(self.scan_mode()))
            .map_err(usage)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run ATC on a numeric stream, one observation per line
    Detect(DetectArgs),
    /// Sample one synthetic stream, one value per line
    Generate(GenerateArgs),
    /// Monte Carlo regret sweep over a horizon grid
    Mc(McArgs),
    /// Evaluate ATC and the baselines on the NAB CPU series
    Nab(NabArgs),
    /// Export the data behind a figure as CSV
    Figure(FigureArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Input file (default stdin)
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Observation dimension; comma-separated components per line
    #[arg(long)]
    pub dim: Option<usize>,
    /// Use the scalar threshold for vector streams
    #[arg(long)]
    pub scalar_threshold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    MainS5,
    Dense,
    Adversarial,
    SingleChange,
    LinearInS,
    NoChange,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "main-s5")]
    pub scenario: ScenarioArg,
    /// Exponent δ of the dense regime
    #[arg(long, default_value_t = 1.0)]
    pub delta_exponent: f64,
    /// Number of changes S (adversarial, linear-in-s)
    #[arg(long, default_value_t = 5)]
    pub changes: usize,
    /// Calibration constant c (adversarial)
    #[arg(long, default_value_t = LINEAR_IN_S_C)]
    pub c: f64,
    /// Change time (single-change)
    #[arg(long, default_value_t = 50)]
    pub tau1: usize,
    /// Jump size (single-change)
    #[arg(long, default_value_t = 0.75)]
    pub jump: f64,
}

impl ScenarioArgs {
    pub fn scenario(&self) -> Scenario {
        match self.scenario {
            ScenarioArg::MainS5 => Scenario::MainS5,
            ScenarioArg::Dense => Scenario::Dense {
                delta_exponent: self.delta_exponent,
            },
            ScenarioArg::Adversarial => Scenario::Adversarial {
                changes: self.changes,
                c: self.c,
            },
            ScenarioArg::SingleChange => Scenario::SingleChange {
                tau1: self.tau1,
                jump: self.jump,
            },
            ScenarioArg::LinearInS => Scenario::LinearInS {
                changes: self.changes,
            },
            ScenarioArg::NoChange => Scenario::NoChange,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub horizon: usize,
    /// Replication index i; the stream uses seed + i
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    /// Also write the environment as JSON
    #[arg(long)]
    pub env_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Atc,
    Const,
    Sw,
    Dm,
    Oracle,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "atc")]
    pub policy: PolicyArg,
    /// Comma-separated horizon grid
    #[arg(long, value_delimiter = ',', required = true)]
    pub horizons: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    /// Constant threshold as a multiple of σ
    #[arg(long, default_value_t = 4.81)]
    pub gamma: f64,
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value_t = 0.98)]
    pub rho: f64,
    /// Also write false-alarm statistics to this CSV
    #[arg(long)]
    pub alarms_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NabArgs {
    /// NAB CSV (default $NAB_CSV, then data/ec2_cpu_utilization_ac20cd.csv)
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CHANGES)]
    pub changes: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value_t = 0.98)]
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureName {
    Fig3c,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Dense,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[arg(value_enum)]
    pub name: FigureName,
    /// Replications per grid point (default: the figure's own count)
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the figure's x grid (horizons, or S for fig9)
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    /// NAB CSV for fig7
    #[arg(long)]
    pub file: Option<PathBuf>,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with<I, T>(
    args: I,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(&cli, stdin, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(
    cli: &Cli,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let settings = cli.shared.resolve()?;
    if let Some(n) = settings.threads {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match &cli.command {
        Command::Detect(a) => cmd_detect(a, &settings, stdin, stdout),
        Command::Generate(a) => cmd_generate(a, &settings, stdout),
        Command::Mc(a) => cmd_mc(a, &settings, stdout),
        Command::Nab(a) => cmd_nab(a, &settings, stdout, stderr),
        Command::Figure(a) => cmd_figure(a, &settings, stderr),
    }
}

fn write_output(out: &Option<PathBuf>, stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(runtime),
    }
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

/// Reads one observation per line (components separated by commas). Blank
/// lines are skipped. Errors name the 1-based line.
pub fn parse_stream(reader: impl Read, dim: Option<usize>) -> Result<TimeSeries, CliError> {
    let mut values = Vec::new();
    let mut width = dim;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| usage(format!("line {}: {e}", i + 1)))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| usage(format!("line {}: not a finite number: {line:?}", i + 1)))?;
        let expected = *width.get_or_insert(row.len());
        if row.len() != expected {
            return Err(usage(format!(
                "line {}: expected {expected} components, got {}",
                i + 1,
                row.len()
            )));
        }
        values.extend(row);
    }
    if values.is_empty() {
        return Err(usage("input stream is empty"));
    }
    TimeSeries::from_flat(values, width.unwrap_or(1)).map_err(usage)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_detect(
    a: &DetectArgs,
    s: &Settings,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if a.dim == Some(0) {
        return Err(usage("--dim must be at least 1"));
    }
    let cfg = s.detector_config()?;
    let stream = match &a.file {
        Some(p) => {
            let f = fs::File::open(p)
                .map_err(|e| usage(format!("cannot open {}: {e}", p.display())))?;
            parse_stream(f, a.dim)?
        }
        None => parse_stream(stdin, a.dim)?,
    };
    let mut text = String::new();
    if stream.dimension() == 1 && !a.scalar_threshold {
        let trace = detector::run(&stream, cfg).map_err(runtime)?;
        for o in &trace.outcomes {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                o.time,
                o.prediction,
                opt(o.statistic),
                opt(o.threshold),
                u8::from(o.alarm)
            ));
        }
    } else {
        let mut vcfg = VectorDetectorConfig::new(cfg, stream.dimension()).map_err(usage)?;
        if a.scalar_threshold {
            vcfg = vcfg.with_scalar_threshold();
        }
        let trace = vector::vector_run(&stream, vcfg).map_err(runtime)?;
        for o in &trace.outcomes {
            let pred: Vec<String> = o.prediction.iter().map(|x| x.to_string()).collect();
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                o.time,
                pred.join(";"),
                opt(o.statistic),
                opt(o.threshold),
                u8::from(o.alarm)
            ));
        }
    }
    write_output(&s.out, stdout, &text)
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

pub fn generate_stream(
    scenario: Scenario,
    sigma: f64,
    horizon: usize,
    seed: u64,
    replication: u64,
) -> Result<(Environment, TimeSeries), CliError> {
    ScenarioSpec::new(scenario, sigma)
        .generate(horizon, &mut RngSpec::new(seed).rng_for(replication))
        .map_err(usage)
}

fn cmd_generate(a: &GenerateArgs, s: &Settings, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (env, series) = generate_stream(
        a.scenario.scenario(),
        s.sigma,
        a.horizon,
        s.seed,
        a.replication,
    )?;
    let mut text = String::with_capacity(series.len() * 20);
    for x in series.values() {
        text.push_str(&format!("{x}\n"));
    }
    if let Some(p) = &a.env_out {
        let json = serde_json::to_string_pretty(&env).map_err(runtime)?;
        fs::write(p, json).map_err(|e| runtime(format!("cannot write {}: {e}", p.display())))?;
    }
    write_output(&s.out, stdout, &text)
}

// ---------------------------------------------------------------------------
// mc
// ---------------------------------------------------------------------------

fn build_policy(
    kind: PolicyArg,
    cfg: DetectorConfig,
    gamma_mult: f64,
    window: usize,
    rho: f64,
) -> Policy {
    match kind {
        PolicyArg::Atc => Policy::Atc(cfg),
        PolicyArg::Const => Policy::ConstantThreshold {
            gamma: gamma_mult * cfg.sigma,
            config: cfg,
        },
        PolicyArg::Sw => Policy::SlidingWindow(window),
        PolicyArg::Dm => Policy::DiscountedMean(rho),
        PolicyArg::Oracle => Policy::Oracle,
    }
}

fn cmd_mc(a: &McArgs, s: &Settings, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = s.detector_config()?;
    if a.reps < 2 {
        return Err(usage("--reps must be at least 2"));
    }
    if a.horizons.contains(&0) {
        return Err(usage("horizons must be positive"));
    }
    let policy = build_policy(a.policy, cfg, a.gamma, a.window, a.rho);
    let spec = ScenarioSpec::new(a.scenario.scenario(), s.sigma);
    // surface generator preconditions as validation errors
    for &t in &a.horizons {
        generate_stream(spec.scenario, s.sigma, t, s.seed, 0)?;
    }
    let summary =
        harness::monte_carlo(&spec, &policy, &a.horizons, a.reps, s.seed).map_err(usage)?;
    if let Some(p) = &a.alarms_out {
        fs::write(p, summary.to_alarm_csv())
            .map_err(|e| runtime(format!("cannot write {}: {e}", p.display())))?;
    }
    write_output(&s.out, stdout, &summary.to_csv())
}

// ---------------------------------------------------------------------------
// nab
// ---------------------------------------------------------------------------

fn load_nab(file: &Option<PathBuf>) -> Result<nab::NabSeries, CliError> {
    let path = match file {
        Some(p) => p.clone(),
        None => nab::locate_nab_file().ok_or_else(|| {
            runtime(format!(
                "NAB file not found; pass --file or set NAB_CSV (expected data/{})",
                nab::NAB_FILE_NAME
            ))
        })?,
    };
    nab::load_nab_csv(&path).map_err(|e| match e {
        nab::NabError::Io { .. } => runtime(e),
        other => usage(other),
    })
}

fn cmd_nab(
    a: &NabArgs,
    s: &Settings,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = s.detector_config()?;
    let series = load_nab(&a.file)?;
    let policies = [
        Policy::Atc(cfg),
        Policy::SlidingWindow(a.window),
        Policy::DiscountedMean(a.rho),
    ];
    for p in &policies[1..] {
        validate_baseline(p)?;
    }
    let evals = nab::evaluate_on_nab(&series, &a.changes, &policies).map_err(usage)?;
    for e in &evals {
        let _ = writeln!(
            stderr,
            "{}: cum_regret={} alarms={}",
            e.policy, e.report.cumulative_regret, e.report.num_alarms
        );
    }
    write_output(&s.out, stdout, &nab::evaluations_to_csv(&evals))
}

fn validate_baseline(p: &Policy) -> Result<(), CliError> {
    use crate::baselines::{BaselineConfig, BaselineKind};
    let kind = match *p {
        Policy::SlidingWindow(w) => BaselineKind::SlidingWindow(w),
        Policy::DiscountedMean(rho) => BaselineKind::DiscountedMean(rho),
        _ => return Ok(()),
    };
    BaselineConfig::new(kind).map(|_| ()).map_err(usage)
}

// ---------------------------------------------------------------------------
// figure
// ---------------------------------------------------------------------------

/// One line of a figure bundle. `x` is the swept quantity: the horizon `T`
/// for every figure except fig9, where it is the number of changes `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub series: String,
    pub x: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub mean_regret: f64,
    pub stderr: f64,
    pub ci_halfwidth: f64,
    pub n_reps: usize,
    pub mean_false_alarms: f64,
    pub fa_stderr: f64,
}

impl FigureRow {
    fn from_mc(series: &str, x: usize, row: &McRow) -> Self {
        Self {
            series: series.to_string(),
            x,
            horizon: row.horizon,
            mean_regret: row.mean_regret,
            stderr: row.stderr,
            ci_halfwidth: row.ci_halfwidth,
            n_reps: row.n_reps,
            mean_false_alarms: row.mean_false_alarms,
            fa_stderr: row.false_alarm_stderr,
        }
    }
}

pub fn write_figure_csv(path: &Path, rows: &[FigureRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(runtime)?;
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

pub fn read_figure_csv(path: &Path) -> Result<Vec<FigureRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(runtime)?;
    r.deserialize().collect::<Result<_, _>>().map_err(runtime)
}

const FIG3C_GRID: [usize; 6] = [600, 1200, 2400, 4800, 7000, 9000];
const FIG6_GRID: [usize; 5] = [5000, 10000, 15000, 20000, 30000];
const FIG8_GRID: [usize; 6] = [600, 1200, 2400, 4800, 7000, 9000];
const FIG9_GRID: [usize; 10] = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20];
const DENSE_GRID: [usize; 11] = [
    1200, 2400, 4800, 7000, 9000, 12000, 15000, 18000, 20000, 22000, 25000,
];
/// Constant thresholds, as multiples of σ, compared in fig6.
pub const FIG6_CONSTANTS: [f64; 3] = [4.81, 6.0, 8.0];
/// Noise scales compared in fig7.
pub const FIG7_SIGMAS: [f64; 3] = [0.5, 1.0, 4.0];

fn cmd_figure(a: &FigureArgs, s: &Settings, stderr: &mut dyn Write) -> Result<(), CliError> {
    let dir = s.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let base = DetectorConfig::new(s.sigma, s.alpha).map_err(usage)?;
    let configured = s.detector_config()?;
    let multiscale = base
        .with_scan(ScanMode::Multiscale { base: s.base })
        .map_err(usage)?;
    let grid = |default: &[usize]| a.grid.clone().unwrap_or_else(|| default.to_vec());
    let reps = |default: usize| a.reps.unwrap_or(default);
    if a.reps.is_some_and(|n| n < 2) {
        return Err(usage("--reps must be at least 2"));
    }
    let sigma = s.sigma;
    let seed = s.seed;
    let sweep = |series: &str, scenario: Scenario, policy: Policy, horizons: &[usize], n: usize| {
        let spec = ScenarioSpec::new(scenario, sigma);
        let summary = harness::monte_carlo(&spec, &policy, horizons, n, seed).map_err(usage)?;
        Ok::<_, CliError>(
            summary
                .rows
                .iter()
                .map(|r| FigureRow::from_mc(series, r.horizon, r))
                .collect::<Vec<_>>(),
        )
    };

    let name = format!("{:?}", a.name).to_lowercase();
    let path = dir.join(format!("{name}.csv"));
    match a.name {
        FigureName::Fig3c => {
            let g = grid(&FIG3C_GRID);
            let n = reps(5000);
            let mut rows = sweep("atc_full", Scenario::MainS5, Policy::Atc(base), &g, n)?;
            rows.extend(sweep(
                "atc_multiscale",
                Scenario::MainS5,
                Policy::Atc(multiscale),
                &g,
                n,
            )?);
            write_figure_csv(&path, &rows)?;
        }
        FigureName::Fig6 => {
            let g = grid(&FIG6_GRID);
            let n = reps(1000);
            let scenario = Scenario::SingleChange {
                tau1: 50,
                jump: 0.75,
            };
            let mut rows = sweep("atc", scenario, Policy::Atc(configured), &g, n)?;
            for c in FIG6_CONSTANTS {
                let policy = Policy::ConstantThreshold {
                    gamma: c * sigma,
                    config: configured,
                };
                rows.extend(sweep(&format!("const_{c}"), scenario, policy, &g, n)?);
            }
            write_figure_csv(&path, &rows)?;
        }
        FigureName::Fig7 => {
            let series = load_nab(&a.file)?;
            let policies: Vec<Policy> = FIG7_SIGMAS
                .iter()
                .map(|&sg| {
                    DetectorConfig::new(sg, s.alpha)
                        .map(Policy::Atc)
                        .map_err(usage)
                })
                .collect::<Result<_, _>>()?;
            let mut evals =
                nab::evaluate_on_nab(&series, &DEFAULT_CHANGES, &policies).map_err(usage)?;
            for (e, sg) in evals.iter_mut().zip(FIG7_SIGMAS) {
                e.policy = format!("atc_sigma_{sg}");
            }
            fs::write(&path, nab::evaluations_to_csv(&evals)).map_err(runtime)?;
        }
        FigureName::Fig8 => {
            let g = grid(&FIG8_GRID);
            let n = reps(1000);
            let mut rows = Vec::new();
            for c in [160.0, 1000.0] {
                let scenario = Scenario::Adversarial { changes: 5, c };
                rows.extend(sweep(
                    &format!("c_{c}"),
                    scenario,
                    Policy::Atc(configured),
                    &g,
                    n,
                )?);
            }
            write_figure_csv(&path, &rows)?;
        }
        FigureName::Fig9 => {
            let g = grid(&FIG9_GRID);
            let n = reps(1000);
            let mut rows = Vec::new();
            for &changes in &g {
                let scenario = Scenario::LinearInS { changes };
                for mut row in sweep("atc", scenario, Policy::Atc(configured), &[1000], n)? {
                    row.x = changes;
                    rows.push(row);
                }
            }
            write_figure_csv(&path, &rows)?;
        }
        FigureName::Dense => {
            let g = grid(&DENSE_GRID);
            let n = reps(1000);
            let mut rows = Vec::new();
            for delta in [1.0, 0.95] {
                let scenario = Scenario::Dense {
                    delta_exponent: delta,
                };
                rows.extend(sweep(
                    &format!("delta_{delta}"),
                    scenario,
                    Policy::Atc(configured),
                    &g,
                    n,
                )?);
            }
            write_figure_csv(&path, &rows)?;
        }
    }
    let _ = writeln!(stderr, "wrote {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str], input: &str) -> (i32, String, String) {
        let mut stdin = input.as_bytes();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut full = vec!["atc"];
        full.extend_from_slice(args);
        let code = main_with(full, &mut stdin, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn detect_constant_values() {
        let (code, out, _) = run(&["detect"], "1.5\n1.5\n1.5\n");
        assert_eq!(code, 0);
        assert_eq!(out, "1,0,,,0\n2,1.5,,,0\n3,1.5,0,3.6779672648720685,0\n");
    }

    #[test]
    fn detect_errors() {
        let (code, _, err) = run(&["detect"], "1\n2\nx\n");
        assert_eq!(code, 2);
        assert!(err.contains("line 3"), "{err}");
        assert_eq!(run(&["detect", "--sigma", "0"], "1\n").0, 2);
        assert_eq!(run(&["detect", "--alpha", "1.5"], "1\n").0, 2);
        assert_eq!(run(&["detect"], "").0, 2);
        assert_eq!(run(&["detect", "--bogus"], "1\n").0, 2);
        assert_eq!(run(&["detect"], "1,2\n3\n").0, 2);
    }

    #[test]
    fn detect_vector_output() {
        let (code, out, _) = run(&["detect"], "1,2\n3,4\n");
        assert_eq!(code, 0);
        assert_eq!(out, "1,0;0,,,0\n2,1;2,,,0\n");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"], "");
        assert_eq!(code, 0);
        assert!(out.contains("detect"));
    }

    #[test]
    fn config_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"sigma": 2.0, "alpha": 0.1, "scan": "multiscale"}"#).unwrap();
        let cli = Cli::try_parse_from([
            "atc",
            "--config",
            p.to_str().unwrap(),
            "--sigma",
            "3",
            "detect",
        ])
        .unwrap();
        let s = cli.shared.resolve().unwrap();
        assert_eq!(s.sigma, 3.0);
        assert_eq!(s.alpha, 0.1);
        assert_eq!(s.scan, ScanArg::Multiscale);
        assert_eq!(s.base, 2.0);
        fs::write(&p, r#"{"sigma": 2.0, "nonsense": 1}"#).unwrap();
        let cli = Cli::try_parse_from(["atc", "--config", p.to_str().unwrap(), "detect"]).unwrap();
        assert!(matches!(cli.shared.resolve(), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_figure_is_usage_error() {
        assert_eq!(run(&["figure", "fig4"], "").0, 2);
    }
}
