//! The `homodyne-bell` command line.
//!
//! Structured results go out as JSON, plot data as CSV with the run manifest
//! in `#` comment lines. Every file is written to a temporary sibling first
//! and renamed into place, so a failed run leaves nothing behind.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 numeric error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bell::{circle_grid, stepped_range, BellEvaluator, BellKind, GridError};
use crate::engine::{conditional_information, CouplingTable, EngineError, LogBase};
use crate::optimizer::{optimize_coefficients, table1_report, OptimizerConfig, OptimizerError};
use crate::oracle::{default_psi_grid, default_states, verify_all, OracleError, QuadratureSpec};
use crate::states::{CorrelatedState, StateError, StateFamily, StateSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "BELL_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Io(_) => EXIT_USAGE,
        }
    }
}

impl From<StateError> for CliError {
    fn from(e: StateError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::TruncationMismatch { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Engine(e) => e.into(),
            GridError::State(e) => e.into(),
        }
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        match e {
            OptimizerError::Engine(e) => e.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            OracleError::ResolutionWarning { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "homodyne-bell",
    version,
    about = "Binned homodyne Bell tests on photon-number-correlated states"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one functional at one angle.
    Eval(EvalArgs),
    /// Functional versus psi for one state, as CSV.
    Sweep(SweepArgs),
    /// Functional over (r, psi) for circle states, as CSV.
    Grid(GridArgs),
    /// Search for the coefficients maximizing a violation.
    Optimize(OptimizeArgs),
    /// Optimal and circle-state columns next to the reference values.
    Table1(Table1Args),
    /// Cross-check every closed form against quadrature.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct StateArgs {
    /// State family: circle, squeezed or two_pair.
    #[arg(long, conflicts_with = "coeff_file")]
    pub family: Option<StateFamily>,
    /// Family parameter (r, s or c0).
    #[arg(long, allow_hyphen_values = true, requires = "family")]
    pub parameter: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub truncation: usize,
    /// JSON state-spec file.
    #[arg(long)]
    pub coeff_file: Option<PathBuf>,
}

impl StateArgs {
    fn spec(&self) -> Result<StateSpec, CliError> {
        match (&self.coeff_file, self.family) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Usage(format!("malformed state spec {}: {e}", path.display()))
                })
            }
            (None, Some(family)) => {
                let parameter = self
                    .parameter
                    .ok_or_else(|| CliError::Usage("--family needs --parameter".into()))?;
                Ok(StateSpec::Family {
                    family,
                    parameter,
                    truncation: self.truncation,
                })
            }
            (None, None) => Err(CliError::Usage(
                "a state is required: --family/--parameter or --coeff-file".into(),
            )),
        }
    }

    fn record(&self, params: &mut BTreeMap<String, Value>) {
        if let Some(path) = &self.coeff_file {
            params.insert("coeff_file".into(), json!(path.display().to_string()));
        } else {
            params.insert("family".into(), json!(self.family));
            params.insert("parameter".into(), json!(self.parameter));
            params.insert("truncation".into(), json!(self.truncation));
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub state: StateArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub psi: f64,
    /// Read angles in degrees.
    #[arg(long)]
    pub degrees: bool,
    #[arg(long, default_value = "ch")]
    pub kind: BellKind,
    /// Information in nats instead of bits.
    #[arg(long)]
    pub nats: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PsiRange {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub psi_start: f64,
    #[arg(long, default_value_t = std::f64::consts::PI, allow_hyphen_values = true)]
    pub psi_end: f64,
    #[arg(long, default_value_t = 0.001, allow_hyphen_values = true)]
    pub psi_step: f64,
    #[arg(long)]
    pub degrees: bool,
}

impl PsiRange {
    fn values(&self) -> Result<Vec<f64>, CliError> {
        let k = if self.degrees {
            std::f64::consts::PI / 180.0
        } else {
            1.0
        };
        range(
            "psi",
            self.psi_start * k,
            self.psi_end * k,
            self.psi_step * k,
        )
    }

    fn record(&self, params: &mut BTreeMap<String, Value>) {
        params.insert("psi_start".into(), json!(self.psi_start));
        params.insert("psi_end".into(), json!(self.psi_end));
        params.insert("psi_step".into(), json!(self.psi_step));
        params.insert("degrees".into(), json!(self.degrees));
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub psi: PsiRange,
    #[arg(long, default_value = "ch")]
    pub kind: BellKind,
    #[arg(long)]
    pub nats: bool,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub r_start: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub r_end: f64,
    #[arg(long, default_value_t = 0.02, allow_hyphen_values = true)]
    pub r_step: f64,
    #[command(flatten)]
    pub psi: PsiRange,
    #[arg(long, default_value_t = 10)]
    pub truncation: usize,
    #[arg(long, default_value = "ch")]
    pub kind: BellKind,
    #[arg(long)]
    pub nats: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizerArgs {
    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl OptimizerArgs {
    fn config(&self) -> Result<OptimizerConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Usage(format!(
                        "malformed optimizer config {}: {e}",
                        path.display()
                    ))
                })?
            }
            None => OptimizerConfig::default(),
        };
        if let Some(v) = self.max_iters {
            config.max_iters = v;
        }
        if let Some(v) = self.tol {
            config.tol = v;
        }
        if let Some(v) = self.restarts {
            config.restarts = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        config.validate()?;
        Ok(config)
    }
}

fn record_config(config: &OptimizerConfig, params: &mut BTreeMap<String, Value>) {
    params.insert("max_iters".into(), json!(config.max_iters));
    params.insert("tol".into(), json!(config.tol));
    params.insert("restarts".into(), json!(config.restarts));
    params.insert("seed".into(), json!(config.seed));
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[arg(long, default_value = "ch")]
    pub kind: BellKind,
    #[arg(long, default_value_t = 10)]
    pub truncation: usize,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct Table1Args {
    #[arg(long, default_value_t = 10)]
    pub truncation: usize,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// JSON destination; the text table always goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 10)]
    pub truncation: usize,
    /// Quadrature points per axis.
    #[arg(long, default_value_t = 400)]
    pub points: usize,
    /// Overwrite G(1,0) before checking (exercises the failure path).
    #[arg(long, hide = true)]
    pub corrupt_table: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Provenance block attached to every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, parameters: BTreeMap<String, Value>, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            parameters,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }

    /// `# key: value` lines for CSV headers.
    pub fn comment_lines(&self) -> String {
        let mut out = format!(
            "# command: {}\n# tool_version: {}\n",
            self.command, self.tool_version
        );
        match self.seed {
            Some(s) => out.push_str(&format!("# seed: {s}\n")),
            None => out.push_str("# seed: none\n"),
        }
        out.push_str(&format!("# timestamp: {}\n", self.timestamp));
        for (k, v) in &self.parameters {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out
    }
}

/// `%.12g`: twelve significant digits, shortest of fixed and exponent form.
pub fn format_g12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn range(name: &str, start: f64, end: f64, step: f64) -> Result<Vec<f64>, CliError> {
    stepped_range(start, end, step).ok_or_else(|| {
        CliError::Usage(format!(
            "bad {name} range: start {start}, end {end}, step {step} (need finite start <= end and step > 0)"
        ))
    })
}

fn log_base(nats: bool) -> LogBase {
    if nats {
        LogBase::Nats
    } else {
        LogBase::Bits
    }
}

fn check_truncation(truncation: usize) -> Result<(), CliError> {
    if !(1..=crate::optimizer::MAX_TRUNCATION).contains(&truncation) {
        return Err(CliError::Usage(format!(
            "truncation must be between 1 and {}, got {truncation}",
            crate::optimizer::MAX_TRUNCATION
        )));
    }
    Ok(())
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, contents),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

/// Merges `manifest` into a serialized object.
fn with_manifest<T: Serialize>(value: &T, manifest: &RunManifest) -> Value {
    let mut v = serde_json::to_value(value).expect("serializable output");
    if let Value::Object(map) = &mut v {
        map.insert(
            "manifest".into(),
            serde_json::to_value(manifest).expect("manifest"),
        );
    }
    v
}

fn state_for(args: &StateArgs) -> Result<(CorrelatedState, CouplingTable), CliError> {
    let state = args.spec()?.build()?;
    check_truncation(state.truncation().max(1))?;
    let table = CouplingTable::build(state.truncation().max(1));
    Ok((state, table))
}

fn cmd_eval(args: &EvalArgs) -> Result<i32, CliError> {
    let psi = if args.degrees {
        args.psi.to_radians()
    } else {
        args.psi
    };
    if !psi.is_finite() {
        return Err(CliError::Usage(format!("psi must be finite, got {psi}")));
    }
    let (state, table) = state_for(&args.state)?;
    let base = log_base(args.nats);
    let eval = BellEvaluator::new(&state, &table, base)?;
    let jp = table.harmonics(&state)?.joint_probabilities(psi)?;
    let value = eval.evaluate(args.kind, psi)?;

    let mut params = BTreeMap::new();
    args.state.record(&mut params);
    params.insert("psi".into(), json!(args.psi));
    params.insert("degrees".into(), json!(args.degrees));
    params.insert("kind".into(), json!(args.kind));
    params.insert("log_base".into(), json!(base));
    let manifest = RunManifest::new("eval", params, None);

    let doc = json!({
        "kind": args.kind,
        "psi": psi,
        "value": value,
        "violated": args.kind.is_violated(value),
        "margin": args.kind.margin(value),
        "p11": jp.p11,
        "p00": jp.p00,
        "p10": jp.p10,
        "p01": jp.p01,
        "E": 4.0 * jp.p11 - 1.0,
        "H": conditional_information(&jp, base),
        "manifest": manifest,
    });
    emit(args.out.as_deref(), &to_json(&doc))?;
    Ok(EXIT_OK)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let grid = args.psi.values()?;
    let (state, table) = state_for(&args.state)?;
    let base = log_base(args.nats);
    let rows = BellEvaluator::new(&state, &table, base)?.sweep(args.kind, &grid)?;

    let mut params = BTreeMap::new();
    args.state.record(&mut params);
    args.psi.record(&mut params);
    params.insert("kind".into(), json!(args.kind));
    params.insert("log_base".into(), json!(base));
    let manifest = RunManifest::new("sweep", params, None);

    let mut csv = manifest.comment_lines();
    csv.push_str("psi,value\n");
    for (psi, value) in rows {
        csv.push_str(&format!("{},{}\n", format_g12(psi), format_g12(value)));
    }
    emit(args.out.as_deref(), &csv)?;
    Ok(EXIT_OK)
}

fn cmd_grid(args: &GridArgs) -> Result<i32, CliError> {
    let r_values = range("r", args.r_start, args.r_end, args.r_step)?;
    if r_values[0] < 0.0 {
        return Err(CliError::Usage("r must be non-negative".into()));
    }
    let psi_values = args.psi.values()?;
    check_truncation(args.truncation)?;
    let table = CouplingTable::build(args.truncation);
    let base = log_base(args.nats);
    let grid = circle_grid(&r_values, &psi_values, &table, args.kind, base)?;

    let mut params = BTreeMap::new();
    params.insert("r_start".into(), json!(args.r_start));
    params.insert("r_end".into(), json!(args.r_end));
    params.insert("r_step".into(), json!(args.r_step));
    args.psi.record(&mut params);
    params.insert("truncation".into(), json!(args.truncation));
    params.insert("kind".into(), json!(args.kind));
    params.insert("log_base".into(), json!(base));
    let manifest = RunManifest::new("grid", params, None);

    let mut csv = manifest.comment_lines();
    csv.push_str("r,psi,value\n");
    for (i, r) in grid.r.iter().enumerate() {
        let r = format_g12(*r);
        for (psi, value) in grid.psi.iter().zip(grid.row(i)) {
            csv.push_str(&format!(
                "{r},{},{}\n",
                format_g12(*psi),
                format_g12(*value)
            ));
        }
    }
    emit(args.out.as_deref(), &csv)?;
    Ok(EXIT_OK)
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<i32, CliError> {
    let config = args.optimizer.config()?;
    check_truncation(args.truncation)?;
    let report = optimize_coefficients(args.kind, args.truncation, &config)?;

    let mut params = BTreeMap::new();
    params.insert("kind".into(), json!(args.kind));
    params.insert("truncation".into(), json!(args.truncation));
    record_config(&config, &mut params);
    let manifest = RunManifest::new("optimize", params, Some(config.seed));

    emit(
        args.out.as_deref(),
        &to_json(&with_manifest(&report, &manifest)),
    )?;
    if args.out.is_some() {
        eprintln!(
            "best {} = {:.6} at psi = {:.6} ({})",
            report.kind.short_name(),
            report.best_value,
            report.best_psi,
            if report.violated {
                "violated"
            } else {
                "no violation"
            }
        );
    }
    Ok(EXIT_OK)
}

fn cmd_table1(args: &Table1Args) -> Result<i32, CliError> {
    let config = args.optimizer.config()?;
    check_truncation(args.truncation)?;
    let report = table1_report(args.truncation, &config)?;

    let mut params = BTreeMap::new();
    params.insert("truncation".into(), json!(args.truncation));
    record_config(&config, &mut params);
    let manifest = RunManifest::new("table1", params, Some(config.seed));

    let text = report.render();
    match &args.out {
        Some(path) => {
            write_atomic(path, &to_json(&with_manifest(&report, &manifest)))?;
            emit(None, &text)?;
        }
        None => {
            emit(None, &text)?;
            emit(None, &to_json(&with_manifest(&report, &manifest)))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32, CliError> {
    check_truncation(args.truncation)?;
    let spec = QuadratureSpec::with_points(args.truncation, args.points);
    spec.validate()?;
    let mut table = CouplingTable::build(args.truncation);
    if args.corrupt_table {
        table = table.with_entry(1, 0, table.get(1, 0) * 1.01);
    }
    let report = verify_all(
        &table,
        &default_psi_grid(),
        &default_states(args.truncation),
        &spec,
    )?;

    let mut params = BTreeMap::new();
    params.insert("truncation".into(), json!(args.truncation));
    params.insert("points".into(), json!(args.points));
    if args.corrupt_table {
        params.insert("corrupt_table".into(), json!(true));
    }
    let manifest = RunManifest::new("verify", params, None);
    emit(
        args.out.as_deref(),
        &to_json(&with_manifest(&report, &manifest)),
    )?;

    for check in report.failures() {
        eprintln!(
            "FAILED {}: deviation {:.3e} > {:.1e} at {}",
            check.name, check.max_deviation, check.tolerance, check.worst_case
        );
    }
    Ok(if report.passed {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "{THREADS_ENV} must be a positive integer, got '{raw}'"
        ))
    })?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Table1(a) => cmd_table1(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
