//! `nat2`: command-line front end for the neighborhood-assisted T² test.

mod groups;
mod input;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nat2::simgen::{curve_rows, write_curve_csv, CurveRow};
use nat2::{
    run_pipeline, run_scenario, run_two_sample_test, CovarianceModel, Innovation, KPolicy,
    PipelineReport, Placement, ScenarioConfig, SelectionConfig, SignalSpec, TestConfig,
    TwoSampleInput,
};
use serde::Serialize;

use crate::groups::{run_batch, BatchOptions};
use crate::input::{paired_difference, read_groups, read_matrix, PairLayout};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl From<nat2::Error> for CliError {
    fn from(e: nat2::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

/// Band width: a fixed integer or `auto` for stability selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KArg {
    Auto,
    Fixed(usize),
}

impl FromStr for KArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "auto" => Ok(KArg::Auto),
            t => t
                .parse()
                .map(KArg::Fixed)
                .map_err(|_| format!("expected `auto` or a non-negative integer, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(
    name = "nat2",
    version,
    about = "Neighborhood-assisted Hotelling T² test for high-dimensional means"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-sample test of H0: mu = 0 on a CSV matrix (rows = samples).
    Test {
        input: PathBuf,
        #[command(flatten)]
        opts: TestOpts,
    },
    /// Two-sample test of H0: mu1 = mu2.
    Test2 {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        opts: TestOpts,
    },
    /// Monte Carlo size/power over a grid; comma-separated values expand to
    /// every combination.
    Simulate(SimulateOpts),
    /// Per-group tests with a Bonferroni threshold.
    Groups(GroupOpts),
}

#[derive(Args)]
struct TestOpts {
    /// Band width, or `auto` for stability selection.
    #[arg(long, default_value = "auto")]
    k: KArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of parts for stability selection.
    #[arg(long = "H", default_value_t = 5)]
    folds: usize,
    /// Largest band width tried by `--k auto` (default n/10).
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    out: Format,
    /// Allow a fixed k above n/10.
    #[arg(long)]
    force_k: bool,
}

impl TestOpts {
    fn policy(&self, n: usize) -> KPolicy {
        match self.k {
            KArg::Fixed(k) => KPolicy::Fixed(k),
            KArg::Auto => KPolicy::Auto(selection(n, self.k_max, self.folds, self.seed)),
        }
    }

    fn config(&self) -> TestConfig<f64> {
        TestConfig {
            alpha: self.alpha,
            force_k: self.force_k,
        }
    }
}

fn selection(n: usize, k_max: Option<usize>, folds: usize, seed: u64) -> SelectionConfig {
    match k_max {
        Some(m) => SelectionConfig::with_max_k(m, folds, seed),
        None => SelectionConfig {
            folds,
            ..SelectionConfig::for_sample_size(n, seed)
        },
    }
}

#[derive(Args)]
struct SimulateOpts {
    /// Covariance models a|b|c|d.
    #[arg(long, value_delimiter = ',', default_value = "a")]
    model: Vec<char>,
    #[arg(long, value_delimiter = ',', default_value = "60")]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "200")]
    p: Vec<usize>,
    /// Sparsity exponent; floor(p^(1-beta)) entries are nonzero.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    beta: Vec<f64>,
    /// Value of each nonzero mean entry (0 gives the null).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    r: Vec<f64>,
    #[arg(long, default_value = "random")]
    placement: Placement,
    /// Redraw random signal positions in every replicate.
    #[arg(long)]
    per_replicate: bool,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "auto")]
    k: Vec<KArg>,
    /// gaussian | gamma | t<df>.
    #[arg(long, value_delimiter = ',', default_value = "gaussian")]
    innovation: Vec<Innovation>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "H", default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also report the diagonal (k = 0) version of the test.
    #[arg(long, alias = "k0")]
    diag: bool,
    /// Skip the known-covariance oracle test.
    #[arg(long)]
    no_oracle: bool,
    #[arg(long)]
    force_k: bool,
    /// Output CSV path; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

impl SimulateOpts {
    fn grid(&self) -> Result<Vec<ScenarioConfig<f64>>, CliError> {
        let mut grid = Vec::new();
        for &m in &self.model {
            for &n in &self.n {
                for &p in &self.p {
                    for &beta in &self.beta {
                        for &r in &self.r {
                            for &k in &self.k {
                                for &innovation in &self.innovation {
                                    let k_policy = match k {
                                        KArg::Fixed(k) => KPolicy::Fixed(k),
                                        KArg::Auto => {
                                            KPolicy::Auto(selection(n, None, self.folds, self.seed))
                                        }
                                    };
                                    let cfg = ScenarioConfig {
                                        n,
                                        p,
                                        model: CovarianceModel::standard(m, self.seed)?,
                                        model_label: m.to_ascii_lowercase().to_string(),
                                        signal: SignalSpec {
                                            beta,
                                            r,
                                            placement: self.placement,
                                            per_replicate: self.per_replicate,
                                        },
                                        reps: self.reps,
                                        alpha: self.alpha,
                                        k_policy,
                                        innovation,
                                        seed: self.seed,
                                        include_oracle: !self.no_oracle,
                                        include_k0: self.diag,
                                        force_k: self.force_k,
                                        keep_z: false,
                                    };
                                    cfg.validate()?;
                                    grid.push(cfg);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(grid)
    }
}

#[derive(Args)]
struct GroupOpts {
    #[arg(long)]
    input: PathBuf,
    /// Tab-separated lines: group name followed by column names.
    #[arg(long)]
    groups: PathBuf,
    /// Test per-subject differences of stacked before/after rows.
    #[arg(long)]
    paired_diff: bool,
    #[arg(long, value_enum, default_value_t = PairLayout::Interleaved)]
    pair_layout: PairLayout,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = Correction::Bonferroni)]
    correction: Correction,
    #[arg(long, default_value_t = 60)]
    min_size: usize,
    #[arg(long = "H", default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output path; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Correction {
    Bonferroni,
}

/// Flat CSV view of a single test.
#[derive(Serialize)]
struct TestRow {
    statistic: f64,
    centering: f64,
    sigma_hat: f64,
    z_score: f64,
    p_value: f64,
    k: usize,
    alpha: f64,
    reject: bool,
    n: usize,
    p: usize,
    selected: bool,
    per_fold_k: String,
}

impl From<&PipelineReport<f64>> for TestRow {
    fn from(r: &PipelineReport<f64>) -> Self {
        let t = &r.report;
        TestRow {
            statistic: t.statistic,
            centering: t.centering,
            sigma_hat: t.sigma_hat,
            z_score: t.z_score,
            p_value: t.p_value,
            k: t.k,
            alpha: t.alpha,
            reject: t.reject,
            n: t.n,
            p: t.p,
            selected: r.selection.is_some(),
            per_fold_k: r.selection.as_ref().map_or(String::new(), |s| {
                s.per_fold_k
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(";")
            }),
        }
    }
}

fn output(path: &Path) -> Result<Box<dyn Write>, CliError> {
    if path == Path::new("-") {
        Ok(Box::new(io::stdout().lock()))
    } else {
        let f =
            File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(Box::new(io::BufWriter::new(f)))
    }
}

fn emit<S: Serialize>(
    value: &S,
    row: Option<TestRow>,
    format: Format,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    match (format, row) {
        (Format::Csv, Some(row)) => {
            let mut w = csv::Writer::from_writer(out);
            w.serialize(row)?;
            w.flush()?;
        }
        _ => {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn cmd_test(path: &Path, opts: &TestOpts) -> Result<(), CliError> {
    let x = read_matrix(path)?.into_data()?;
    let report = run_pipeline(&x, &opts.policy(x.n()), &opts.config())?;
    emit(
        &report,
        Some(TestRow::from(&report)),
        opts.out,
        &mut io::stdout().lock(),
    )
}

fn cmd_test2(x: &Path, y: &Path, opts: &TestOpts) -> Result<(), CliError> {
    let input = TwoSampleInput::new(read_matrix(x)?.into_data()?, read_matrix(y)?.into_data()?)?;
    let n = input.x1.n().min(input.x2.n());
    let report = run_two_sample_test(&input, &opts.policy(n), &opts.config())?;
    emit(
        &report,
        Some(TestRow::from(&report.pipeline)),
        opts.out,
        &mut io::stdout().lock(),
    )
}

fn cmd_simulate(opts: &SimulateOpts) -> Result<(), CliError> {
    let grid = opts.grid()?;
    let mut rows: Vec<CurveRow> = Vec::new();
    for cfg in &grid {
        let result = run_scenario(cfg)?;
        if let Some(e) = &result.first_error {
            log::warn!("model {} n={} p={}: {e}", cfg.model_label, cfg.n, cfg.p);
        }
        rows.extend(curve_rows(cfg, &result));
    }
    write_curve_csv(&rows, output(&opts.out)?)?;
    Ok(())
}

fn cmd_groups(opts: &GroupOpts) -> Result<(), CliError> {
    let Correction::Bonferroni = opts.correction;
    let mut table = read_matrix(&opts.input)?;
    if !table.has_header {
        log::info!("no header row; columns are named by their 1-based position");
    }
    if opts.paired_diff {
        table.data = paired_difference(&table.data, opts.pair_layout)?;
    }
    let groups = read_groups(&opts.groups)?;
    let report = run_batch(
        &table,
        &groups,
        &BatchOptions {
            alpha: opts.alpha,
            min_size: opts.min_size,
            folds: opts.folds,
            seed: opts.seed,
        },
    )?;
    let mut out = output(&opts.out)?;
    match opts.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for row in &report.groups {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("NA_T2_THREADS") else {
        return Ok(());
    };
    let threads: usize = v.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        CliError::Input(format!(
            "NA_T2_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Test { input, opts } => cmd_test(input, opts),
        Command::Test2 { x, y, opts } => cmd_test2(x, y, opts),
        Command::Simulate(opts) => cmd_simulate(opts),
        Command::Groups(opts) => cmd_groups(opts),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
