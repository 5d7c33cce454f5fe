//! Batch command-line front end.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 numerical failure.
//! Failures print one JSON object on standard error:
//! `{"error": <kind>, "message": <text>, "exit_code": <n>, "details": {...}}`.

mod eval;
mod fit;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ac_solver::{solve_ac, AcError, AcOptions};
use crate::case_io::{load_case, save_case, CaseError, CaseFormat};
use crate::linear_models::{solve_linear, LinearError, ModelCoefficients};
use crate::metrics::MetricsError;
use crate::network::Network;
use crate::records::{RecordError, SolutionModel, SolutionRecord};
use crate::regression::RegressionError;
use crate::scenarios::{
    generate_hourly_cases, write_scenarios, HourStatus, ScenarioError, ScenarioSpec,
};

pub use eval::{
    load_summary, recompute_reports, run_eval, EvalConfig, EvalSummary, HourResult,
    ReportFormat, EVAL_SUMMARY,
};
pub use fit::{load_diagnostics, run_fit, FitConfig, FitDiagnostics, TrainingCase, DIAGNOSTICS_FILE};
pub use manifest::{read_manifest, sha256_file, ManifestBuilder, RunManifest, MANIFEST_FILE};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "DLAC_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Input {
        kind: String,
        message: String,
        details: Value,
    },
    #[error("{message}")]
    Numerical {
        kind: String,
        message: String,
        details: Value,
    },
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input {
            kind: "InputError".into(),
            message: message.into(),
            details: Value::Null,
        }
    }

    fn input_kind(kind: &str, message: impl Into<String>, details: Value) -> Self {
        CliError::Input {
            kind: kind.into(),
            message: message.into(),
            details,
        }
    }

    fn numerical(kind: &str, message: impl Into<String>, details: Value) -> Self {
        CliError::Numerical {
            kind: kind.into(),
            message: message.into(),
            details,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::input_kind(
            "Io",
            format!("{}: {e}", path.display()),
            json!({ "path": path.display().to_string() }),
        )
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 1,
            CliError::Numerical { .. } => 2,
        }
    }

    pub fn kind(&self) -> &str {
        match self {
            CliError::Input { kind, .. } | CliError::Numerical { kind, .. } => kind,
        }
    }

    pub fn to_json(&self) -> Value {
        let details = match self {
            CliError::Input { details, .. } | CliError::Numerical { details, .. } => details,
        };
        json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
            "details": details,
        })
    }

    /// Prefixes the message with the offending item, e.g. a case name.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Input { kind, message, details } => CliError::Input {
                kind,
                message: format!("{what}: {message}"),
                details,
            },
            CliError::Numerical { kind, message, details } => CliError::Numerical {
                kind,
                message: format!("{what}: {message}"),
                details,
            },
        }
    }
}

impl From<CaseError> for CliError {
    fn from(e: CaseError) -> Self {
        let msg = e.to_string();
        match e {
            CaseError::Io { path, .. } => CliError::input_kind("Io", msg, json!({ "path": path })),
            CaseError::Parse { line, field, .. } => {
                CliError::input_kind("ParseError", msg, json!({ "line": line, "field": field }))
            }
            CaseError::Unsupported(m) => {
                CliError::input_kind("UnsupportedMatrix", msg, json!({ "matrix": m }))
            }
            CaseError::Invalid(_) => CliError::input_kind("InvalidNetwork", msg, Value::Null),
        }
    }
}

impl From<AcError> for CliError {
    fn from(e: AcError) -> Self {
        let msg = e.to_string();
        match e {
            AcError::Divergence {
                iterations,
                last_mismatch,
            } => CliError::numerical(
                "Divergence",
                msg,
                json!({ "iterations": iterations, "last_mismatch": last_mismatch }),
            ),
            AcError::SingularJacobian { iteration } => CliError::numerical(
                "SingularJacobian",
                msg,
                json!({ "iteration": iteration }),
            ),
            AcError::Network(_) => CliError::input_kind("InvalidNetwork", msg, Value::Null),
        }
    }
}

impl From<LinearError> for CliError {
    fn from(e: LinearError) -> Self {
        let msg = e.to_string();
        match e {
            LinearError::SingularSystem => CliError::numerical("SingularSystem", msg, Value::Null),
            LinearError::UnsupportedPhaseShift { branch, shift } => CliError::input_kind(
                "UnsupportedPhaseShift",
                msg,
                json!({ "branch": branch, "shift": shift }),
            ),
            LinearError::InvalidBranch { branch, .. } => {
                CliError::input_kind("InvalidBranch", msg, json!({ "branch": branch }))
            }
            LinearError::InvalidCoefficients(_) | LinearError::CoefficientFile { .. } => {
                CliError::input_kind("InvalidCoefficients", msg, Value::Null)
            }
            LinearError::Network(_) => CliError::input_kind("InvalidNetwork", msg, Value::Null),
        }
    }
}

impl From<RegressionError> for CliError {
    fn from(e: RegressionError) -> Self {
        let msg = e.to_string();
        match e {
            RegressionError::RankDeficient(c) => {
                CliError::numerical("RankDeficient", msg, json!({ "column": c }))
            }
            RegressionError::NonFinite(c) => {
                CliError::numerical("NonFinite", msg, json!({ "column": c }))
            }
            RegressionError::Stats(_) => CliError::numerical("NumericalError", msg, Value::Null),
            RegressionError::Linear(l) => l.into(),
            _ => CliError::input_kind("InvalidTrainingData", msg, Value::Null),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Case(c) => c.into(),
            other => CliError::input_kind("InvalidScenario", other.to_string(), Value::Null),
        }
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        CliError::input_kind("InvalidRecord", e.to_string(), Value::Null)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::TopologyMismatch(_) | MetricsError::LengthMismatch(..) => {
                CliError::input_kind("TopologyMismatch", e.to_string(), Value::Null)
            }
            other => CliError::numerical("MetricsError", other.to_string(), Value::Null),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dlac", version, about = "Linear power-flow models fitted to AC snapshots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one case with the AC solver or a linear model.
    Solve(SolveArgs),
    /// Fit DDC/DLAC coefficients on AC-solved training cases.
    Fit(FitArgs),
    /// Generate synthetic hourly cases from a base case.
    Scenarios(ScenarioArgs),
    /// Score linear models against AC over a set of cases.
    Eval(EvalArgs),
    /// Convert a MATPOWER case to the native JSON format.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// `.m` is MATPOWER, anything else native JSON.
    Auto,
    Matpower,
    Native,
}

impl FormatArg {
    fn resolve(self, path: &Path) -> CaseFormat {
        match self {
            FormatArg::Auto => CaseFormat::from_path(path),
            FormatArg::Matpower => CaseFormat::Matpower,
            FormatArg::Native => CaseFormat::Native,
        }
    }
}

#[derive(Debug, Args)]
pub struct AcArgs {
    /// Mismatch tolerance, per-unit.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 30)]
    pub max_iter: usize,
    /// Switch PV buses to PQ at generator reactive limits.
    #[arg(long)]
    pub q_limits: bool,
}

impl AcArgs {
    pub fn options(&self) -> AcOptions {
        AcOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            flat_start: true,
            enforce_q_limits: self.q_limits,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    /// ac, dc, ddc, lac or dlac.
    #[arg(long)]
    pub model: SolutionModel,
    /// Coefficient file; required for ddc and dlac.
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
    /// Solution JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub ac: AcArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training cases (all sharing one topology).
    #[arg(long, num_args = 1.., required = true)]
    pub train: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    /// Coefficient JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for the fit diagnostics; defaults to the coefficient
    /// file's directory.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[command(flatten)]
    pub ac: AcArgs,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 72)]
    pub hours: usize,
    #[arg(long, default_value_t = 0.15)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 18.0)]
    pub phase_hours: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0.7)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1.3)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Skip the per-hour AC feasibility check.
    #[arg(long)]
    pub no_check: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl ScenarioArgs {
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            hours: self.hours,
            amplitude: self.amplitude,
            phase_hours: self.phase_hours,
            noise_sd: self.noise_sd,
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scenario directory (or a single case file).
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub coeffs: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "dc,ddc,lac,dlac")]
    pub models: Vec<crate::linear_models::LinearModel>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,md,json")]
    pub formats: Vec<ReportFormat>,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to $DLAC_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub ac: AcArgs,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Matpower)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::input_kind("UsageError", e.to_string().trim(), Value::Null);
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Solve(a) => cmd_solve(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Scenarios(a) => cmd_scenarios(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Convert(a) => cmd_convert(a),
    }
}

pub(crate) fn case_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub(crate) fn load(path: &Path, format: FormatArg) -> Result<Network, CliError> {
    load_case(path, format.resolve(path)).map_err(|e| with_path(e, path))
}

/// I/O errors already name the file; everything else gets it prefixed.
pub(crate) fn with_path(e: CaseError, path: &Path) -> CliError {
    let named = matches!(e, CaseError::Io { .. });
    let err = CliError::from(e);
    if named {
        err
    } else {
        err.context(&path.display().to_string())
    }
}

pub(crate) fn parent_dir(path: &Path) -> Result<PathBuf, CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Worker pool sized by the flag, then `DLAC_THREADS`, then rayon's
/// default.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let n = match threads {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::input(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))
            })?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))
}

pub(crate) fn load_coefficients(
    path: Option<&Path>,
    needed_by: &[&str],
) -> Result<Option<ModelCoefficients>, CliError> {
    match path {
        Some(p) => Ok(Some(ModelCoefficients::load(p)?)),
        None if !needed_by.is_empty() => Err(CliError::input_kind(
            "MissingCoefficients",
            format!("coefficients required for model {} (--coeffs)", needed_by.join(", ")),
            Value::Null,
        )),
        None => Ok(None),
    }
}

fn cmd_solve(a: &SolveArgs) -> Result<(), CliError> {
    let needed: Vec<&str> = a
        .model
        .linear()
        .filter(|m| m.is_data_driven())
        .map(|m| m.as_str())
        .into_iter()
        .collect();
    let coeffs = load_coefficients(a.coeffs.as_deref(), &needed)?;
    let net = load(&a.case, a.format)?;
    let case = case_name(&a.case);
    let record = match a.model.linear() {
        None => SolutionRecord::from_ac(&net, &case, &solve_ac(&net, &a.ac.options())?),
        Some(m) => {
            let c = coeffs.unwrap_or_else(ModelCoefficients::identity);
            SolutionRecord::from_linear(&net, &case, &solve_linear(&net, m, &c)?)
        }
    };
    let dir = parent_dir(&a.out)?;
    record.save(&a.out)?;

    let mut m = ManifestBuilder::new("solve");
    m.input(&a.case).option("model", a.model).option("tol", a.ac.tol);
    if let Some(c) = &a.coeffs {
        m.input(c);
    }
    m.output(a.out.clone());
    m.finish(&dir)?;
    println!(
        "{}: {} solution written to {} (max mismatch {:.3e} p.u.)",
        case,
        a.model,
        a.out.display(),
        record.max_mismatch
    );
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let cfg = FitConfig {
        train: a.train.clone(),
        format: a.format,
        out: a.out.clone(),
        diagnostics: a.diagnostics.clone(),
        ac: a.ac.options(),
    };
    let (coeffs, _) = run_fit(&cfg)?;
    println!(
        "k_d = {:.6}, k_a = [{}] written to {}",
        coeffs.k_d,
        coeffs
            .k_a
            .iter()
            .map(|k| format!("{k:.6}"))
            .collect::<Vec<_>>()
            .join(", "),
        a.out.display()
    );
    Ok(())
}

fn cmd_scenarios(a: &ScenarioArgs) -> Result<(), CliError> {
    let base = load(&a.base, a.format)?;
    let spec = a.spec();
    let cases = generate_hourly_cases(&base, &spec)?;
    let statuses = if a.no_check {
        None
    } else {
        use rayon::prelude::*;
        let opts = AcOptions::default();
        let pool = thread_pool(a.threads)?;
        Some(pool.install(|| {
            cases
                .par_iter()
                .map(|c| match solve_ac(&c.network, &opts) {
                    Ok(s) => HourStatus::Feasible {
                        iterations: s.iterations,
                    },
                    Err(e) => HourStatus::Infeasible {
                        reason: e.to_string(),
                    },
                })
                .collect::<Vec<_>>()
        }))
    };
    let manifest = write_scenarios(
        &a.out,
        &a.base.display().to_string(),
        &spec,
        &cases,
        statuses.as_deref(),
    )?;

    let mut m = ManifestBuilder::new("scenarios");
    m.input(&a.base).option("spec", &spec).option("check_ac", !a.no_check);
    for c in &cases {
        m.output(a.out.join(c.file_name()));
    }
    m.output(a.out.join(crate::scenarios::SCENARIO_MANIFEST));
    m.finish(&a.out)?;

    let infeasible: Vec<String> = manifest
        .hours
        .iter()
        .filter(|h| matches!(h.ac, Some(HourStatus::Infeasible { .. })))
        .map(|h| format!("{} (λ = {:.4})", h.hour, h.lambda))
        .collect();
    println!("{} hourly cases written to {}", cases.len(), a.out.display());
    if !infeasible.is_empty() {
        println!("infeasible hours: {}", infeasible.join(", "));
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = EvalConfig {
        cases: a.cases.clone(),
        coeffs: a.coeffs.clone(),
        models: a.models.clone(),
        formats: a.formats.clone(),
        out: a.out.clone(),
        threads: a.threads,
        ac: a.ac.options(),
        report: Default::default(),
    };
    let summary = run_eval(&cfg)?;
    println!(
        "{} of {} hours evaluated; reports in {}",
        summary.succeeded,
        summary.hours.len(),
        a.out.display()
    );
    for h in summary.hours.iter().filter(|h| h.error.is_some()) {
        println!("  hour {:03} failed: {}", h.hour, h.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn cmd_convert(a: &ConvertArgs) -> Result<(), CliError> {
    let net = load(&a.input, a.format)?;
    let dir = parent_dir(&a.out)?;
    save_case(&net, &a.out)?;
    let mut m = ManifestBuilder::new("convert");
    m.input(&a.input).output(a.out.clone());
    m.finish(&dir)?;
    println!(
        "{}: {} buses, {} branches, {} generators written to {}",
        case_name(&a.input),
        net.n_buses(),
        net.branches.len(),
        net.generators.len(),
        a.out.display()
    );
    Ok(())
}
