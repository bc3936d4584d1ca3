//! Command-line front end: simulate panels, estimate the frontier model, run
//! the two bootstrap tests and Monte Carlo power grids.
//!
//! Exit codes: 0 success (or the test does not reject), 3 the test rejects,
//! 1 usage or data error, 2 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use stfrontier::bootstrap::{NonstationaryPolicy, SeriesSource, TeSource, TestConfig, TestReport};
use stfrontier::io::{read_panel_csv, read_te, write_panel, write_te};
use stfrontier::power::{format_summary, run_grid, write_power_csv, GridSpec};
use stfrontier::{
    estimate_model, simulate_panel, test_constant_spatial, test_constant_temporal, test_spatial_on_panel, Dominance,
    EfficiencyOptions, LevelRule, Panel, Scenario64,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_REJECT: i32 = 3;

const TOOL: &str = "stfrontier";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] stfrontier::Error),
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_ERROR,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "stfrontier", version, about = "Spatial-temporal stochastic frontier toolkit")]
struct Cli {
    /// Worker threads (results do not depend on it). Defaults to RAYON_NUM_THREADS or all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a panel and write it as CSV
    Simulate(SimulateArgs),
    /// Estimate frontier and efficiency parameters of a panel
    Estimate(EstimateArgs),
    /// Run one of the bootstrap assumption tests
    Test {
        #[command(subcommand)]
        kind: TestCommand,
    },
    /// Same as `test temporal`
    #[command(name = "test-temporal")]
    TestTemporal(TestArgs),
    /// Same as `test spatial`
    #[command(name = "test-spatial")]
    TestSpatial(TestArgs),
    /// Run a Monte Carlo size/power grid
    Power(PowerArgs),
}

#[derive(Subcommand, Debug)]
enum TestCommand {
    /// Common autocorrelation across units (AR-sieve bootstrap)
    Temporal(TestArgs),
    /// Common spatial effect across periods (case-resampling bootstrap)
    Spatial(TestArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario JSON; flags below override its fields
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    n_units: Option<usize>,
    #[arg(long)]
    n_periods: Option<usize>,
    #[arg(long, value_enum)]
    dominance: Option<DominanceArg>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    temporal_shift: Option<f64>,
    #[arg(long)]
    spatial_shift: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Panel CSV to write
    #[arg(long)]
    out: PathBuf,
    /// Also write the simulation ground truth as JSON
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Panel CSV
    #[arg(long)]
    input: PathBuf,
    /// JSON report
    #[arg(long)]
    out: PathBuf,
    /// Fitted technical efficiency CSV (unit,period,te)
    #[arg(long)]
    te_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LevelArg::Profile)]
    level: LevelArg,
    /// Add an intercept to the efficiency regression
    #[arg(long)]
    intercept: bool,
}

#[derive(Args, Debug)]
struct TestOptions {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    boot_k: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    ar_order: usize,
    #[arg(long, value_enum, default_value_t = SeriesArg::FrontierResiduals)]
    series_source: SeriesArg,
    #[arg(long, value_enum, default_value_t = NonstationaryArg::YuleWalker)]
    nonstationary: NonstationaryArg,
    /// Length of each sieve replicate (defaults to the panel length)
    #[arg(long)]
    boot_length: Option<usize>,
}

impl TestOptions {
    fn config(&self) -> TestConfig {
        TestConfig {
            ar_order_p: self.ar_order,
            n_boot_k: self.boot_k,
            alpha: self.alpha,
            series_source: self.series_source.into(),
            seed: self.seed,
            boot_length: self.boot_length,
            nonstationary: self.nonstationary.into(),
        }
    }
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Panel CSV
    #[arg(long)]
    input: PathBuf,
    /// Technical efficiency CSV for the spatial test; estimated when absent
    #[arg(long)]
    te: Option<PathBuf>,
    /// Which estimated efficiency the spatial test uses
    #[arg(long, value_enum, default_value_t = TeSourceArg::Observed)]
    te_source: TeSourceArg,
    /// JSON report
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    options: TestOptions,
}

#[derive(Args, Debug)]
struct PowerArgs {
    /// Grid JSON; omitted fields take their defaults
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Table CSV (test,n,T,dominance,fraction,shift,reps,rejections,rate)
    #[arg(long)]
    out: PathBuf,
    /// Full table with per-cell timings as JSON
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    boot_k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    ar_order: Option<usize>,
    #[arg(long, value_enum)]
    series_source: Option<SeriesArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DominanceArg {
    Equal,
    Spatial,
    Covariate,
}

impl From<DominanceArg> for Dominance {
    fn from(d: DominanceArg) -> Self {
        match d {
            DominanceArg::Equal => Dominance::Equal,
            DominanceArg::Spatial => Dominance::SpatialDominates,
            DominanceArg::Covariate => Dominance::CovariateDominates,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LevelArg {
    Negate,
    Profile,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SeriesArg {
    FrontierResiduals,
    LogOutput,
}

impl From<SeriesArg> for SeriesSource {
    fn from(s: SeriesArg) -> Self {
        match s {
            SeriesArg::FrontierResiduals => SeriesSource::FrontierResiduals,
            SeriesArg::LogOutput => SeriesSource::LogOutput,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NonstationaryArg {
    YuleWalker,
    Error,
}

impl From<NonstationaryArg> for NonstationaryPolicy {
    fn from(s: NonstationaryArg) -> Self {
        match s {
            NonstationaryArg::YuleWalker => NonstationaryPolicy::YuleWalker,
            NonstationaryArg::Error => NonstationaryPolicy::Error,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TeSourceArg {
    Observed,
    Fitted,
}

impl From<TeSourceArg> for TeSource {
    fn from(s: TeSourceArg) -> Self {
        match s {
            TeSourceArg::Observed => TeSource::Observed,
            TeSourceArg::Fitted => TeSource::Fitted,
        }
    }
}

/// Provenance embedded in every output file.
#[derive(Debug, Clone, Serialize)]
struct RunInfo {
    tool: &'static str,
    version: &'static str,
    command: String,
    seed: Option<u64>,
}

impl RunInfo {
    fn new(argv: &[String], seed: Option<u64>) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command: argv.join(" "),
            seed,
        }
    }

    fn comments(&self) -> Vec<String> {
        let mut lines = vec![
            format!("{} {}", self.tool, self.version),
            format!("command: {}", self.command),
        ];
        if let Some(seed) = self.seed {
            lines.push(format!("seed: {seed}"));
        }
        lines
    }
}

/// Writes through a temporary file in the target directory, then renames it
/// over `path`.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut File) -> CliResult<()>) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    write_atomic(path, |f| {
        serde_json::to_writer_pretty(&mut *f, value).map_err(|source| CliError::Json {
            path: path.display().to_string(),
            source,
        })?;
        writeln!(f)?;
        Ok(())
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn load_panel(path: &Path) -> CliResult<Panel> {
    read_panel_csv(path).map_err(|e| match e {
        stfrontier::Error::Io(io) => CliError::Usage(format!("{}: {io}", path.display())),
        other => CliError::Core(other),
    })
}

fn simulate(args: &SimulateArgs, argv: &[String]) -> CliResult<i32> {
    let mut scenario: Scenario64 = match &args.scenario {
        Some(p) => read_json(p)?,
        None => Scenario64::new(50, 12, 0),
    };
    if let Some(n) = args.n_units {
        scenario.n_units = n;
    }
    if let Some(t) = args.n_periods {
        scenario.n_periods = t;
    }
    if let Some(d) = args.dominance {
        scenario.dominance = d.into();
    }
    if let Some(f) = args.fraction {
        scenario.contamination_fraction = f;
    }
    if let Some(r) = args.temporal_shift {
        scenario.temporal_shift_r = r;
    }
    if let Some(g) = args.spatial_shift {
        scenario.spatial_shift_g = g;
    }
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    let sim = simulate_panel(&scenario)?;
    let run = RunInfo::new(argv, Some(scenario.seed));
    write_atomic(&args.out, |f| Ok(write_panel(&sim.panel, f, &run.comments())?))?;
    if let Some(truth) = &args.truth {
        write_json(
            truth,
            &json!({
                "run": run,
                "scenario": scenario,
                "params": sim.params,
                "unit_rho": sim.unit_rho,
                "period_gamma": sim.period_gamma,
                "contaminated_units": sim.contaminated_units,
                "contaminated_periods": sim.contaminated_periods,
            }),
        )?;
    }
    println!(
        "simulate: wrote {} rows ({} units x {} periods) to {} (seed {})",
        scenario.n_units * scenario.n_periods,
        scenario.n_units,
        scenario.n_periods,
        args.out.display(),
        scenario.seed
    );
    Ok(EXIT_OK)
}

fn estimate(args: &EstimateArgs, argv: &[String]) -> CliResult<i32> {
    let panel = load_panel(&args.input)?;
    let options = EfficiencyOptions {
        level: match args.level {
            LevelArg::Negate => LevelRule::Negate,
            LevelArg::Profile => LevelRule::Profile,
        },
        intercept: args.intercept,
    };
    let est = estimate_model(&panel, options)?;
    let run = RunInfo::new(argv, None);
    write_json(&args.out, &json!({ "run": run, "estimation": est }))?;
    if let Some(te_path) = &args.te_out {
        write_atomic(te_path, |f| {
            Ok(write_te(est.te.view(), panel.unit_ids(), panel.period_ids(), f, &run.comments())?)
        })?;
    }
    println!(
        "estimate: beta0 {:.4}, beta {:?}, rho {:.4}, gamma {:?}, phi {:?}; {} of {} observations clamped{}",
        est.frontier.beta0_hat,
        est.frontier.beta_hat.iter().map(|b| format!("{b:.4}")).collect::<Vec<_>>(),
        est.frontier.rho_hat,
        est.gamma_hat.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>(),
        est.phi_hat.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>(),
        est.clamp_count,
        panel.n_units() * panel.n_periods(),
        if est.clamp_flagged { " (flagged)" } else { "" },
    );
    Ok(EXIT_OK)
}

fn finish_test(report: &TestReport<f64>, args: &TestArgs, argv: &[String]) -> CliResult<i32> {
    let run = RunInfo::new(argv, Some(args.options.seed));
    write_json(&args.out, &json!({ "run": run, "report": report }))?;
    println!(
        "{} test: {} H0 ({} of {} intervals exclude the reference {:.4}; seed {})",
        report.kind.label(),
        if report.reject { "reject" } else { "fail to reject" },
        report.n_failing,
        report.per_block_interval.len(),
        report.reference_value,
        args.options.seed
    );
    Ok(if report.reject { EXIT_REJECT } else { EXIT_OK })
}

fn test_temporal(args: &TestArgs, argv: &[String]) -> CliResult<i32> {
    if args.te.is_some() {
        return Err(CliError::Usage("--te applies to the spatial test only".into()));
    }
    let panel = load_panel(&args.input)?;
    let report = test_constant_temporal(&panel, &args.options.config())?;
    finish_test(&report, args, argv)
}

fn test_spatial(args: &TestArgs, argv: &[String]) -> CliResult<i32> {
    let panel = load_panel(&args.input)?;
    let config = args.options.config();
    let report = match &args.te {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let te = read_te::<f64, _>(BufReader::new(file), panel.unit_ids(), panel.period_ids())?;
            let mut r = test_constant_spatial(te.view(), panel.spatial(), &config)?;
            r.block_labels = panel.period_ids().to_vec();
            r
        }
        None => test_spatial_on_panel(&panel, &config, args.te_source.into(), EfficiencyOptions::default())?,
    };
    finish_test(&report, args, argv)
}

fn power(args: &PowerArgs, argv: &[String]) -> CliResult<i32> {
    let mut spec: GridSpec<f64> = match &args.grid {
        Some(p) => read_json(p)?,
        None => GridSpec::default(),
    };
    if let Some(r) = args.reps {
        spec.n_reps = r;
    }
    let cfg = &mut spec.settings.test_config;
    if let Some(k) = args.boot_k {
        cfg.n_boot_k = k;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(p) = args.ar_order {
        cfg.ar_order_p = p;
    }
    if let Some(s) = args.series_source {
        cfg.series_source = s.into();
    }
    let table = run_grid(&spec, args.seed)?;
    let run = RunInfo::new(argv, Some(args.seed));
    write_atomic(&args.out, |f| Ok(write_power_csv(&table, f, &run.comments())?))?;
    if let Some(path) = &args.json {
        write_json(path, &json!({ "run": run, "table": table }))?;
    }
    print!("{}", format_summary(&table));
    println!(
        "power: {} cells written to {}, {} failed (seed {})",
        table.cells.len(),
        args.out.display(),
        table.failures.len(),
        args.seed
    );
    Ok(if table.failures.is_empty() { EXIT_OK } else { EXIT_NUMERICAL })
}

fn dispatch(cli: &Cli, argv: &[String]) -> CliResult<i32> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, argv),
        Command::Estimate(a) => estimate(a, argv),
        Command::Test { kind: TestCommand::Temporal(a) } | Command::TestTemporal(a) => test_temporal(a, argv),
        Command::Test { kind: TestCommand::Spatial(a) } | Command::TestSpatial(a) => test_spatial(a, argv),
        Command::Power(a) => power(a, argv),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already initialised: {e}");
        }
    }
    let mut shown: Vec<String> = argv.iter().map(|s| s.to_string_lossy().into_owned()).collect();
    if let Some(first) = shown.first_mut() {
        *first = TOOL.to_string();
    }
    match dispatch(&cli, &shown) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
