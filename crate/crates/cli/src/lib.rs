//! Command-line front end: parse an instance, run one direction of the pipeline and
//! emit the certificate, or run the auxiliary estimate, oracle and verify commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use grothcover::certify::{
    run_pipeline, verify_certificate, CertificateDocument, Direction, OracleSummary,
    PipelineConfig, PipelineOutput, ScheduleOverride, VerificationReport, VERIFY_TOL,
};
use grothcover::cones::{ConeSpec, DistKind};
use grothcover::cover::CoverMode;
use grothcover::instances::ProblemKind;
use grothcover::oracle::{brute_maxq, exact_fevc_target, OracleArg, MAX_ENUM_DIM, MAX_LP_VARS};
use grothcover::relax::{solve_nu, Operand, SolverConfig};
use grothcover::rounding::estimate_rounding_constant;
use grothcover::Error;
use serde::Serialize;
use thiserror::Error;

pub mod input;

pub use input::{parse_instance, InputFormat, Instance};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;

/// Environment variable capping the worker threads.
pub const THREADS_VAR: &str = "GROTHCOVER_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse(_) | CliError::Usage(_) => EXIT_INPUT,
            CliError::Core(e) => match e {
                Error::BudgetExhausted { .. } => EXIT_BUDGET,
                Error::IndexOutOfRange { .. }
                | Error::InvalidInstance(_)
                | Error::NegativeWeight { .. }
                | Error::DimensionMismatch { .. }
                | Error::NotSymmetric(_)
                | Error::RequiresPolyhedral
                | Error::InvalidParameter(_)
                | Error::BetaInfeasible { .. }
                | Error::TooLarge { .. } => EXIT_INPUT,
                // The run could not produce a verified certificate.
                _ => EXIT_VERIFY_FAILED,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "grothcover",
    version,
    about = "Simultaneous approximation certificates for Boolean 2-CSPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Covering target in, payoff weights and certificate out.
    Cover(RunArgs),
    /// Payoff weights in, covering target and certificate out.
    Solve(RunArgs),
    /// Empirical rounding constant at the relaxation optimum.
    EstimateAlpha(EstimateArgs),
    /// Exact optimum by enumeration and, for CSPs, the exact fractional cover.
    Oracle(OracleArgs),
    /// Re-check a certificate against its instance.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Theoretical,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dist {
    /// Positive semidefinite correlation matrices.
    Psd,
    /// PSD matrices that also satisfy the triangle inequalities.
    Triangle,
}

impl From<Dist> for DistKind {
    fn from(d: Dist) -> Self {
        match d {
            Dist::Psd => DistKind::Psd,
            Dist::Triangle => DistKind::PsdTriangle,
        }
    }
}

fn parse_kind(s: &str) -> Result<ProblemKind, String> {
    ProblemKind::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Instance file (JSON or `i j w` edge list).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub input_format: InputFormat,
    /// Problem kind of an edge list: maxcut, maxdicut, max2sat.
    #[arg(long, default_value = "maxcut", value_parser = parse_kind)]
    pub kind: ProblemKind,
    #[arg(long, value_enum, default_value_t = Dist::Triangle)]
    pub dist: Dist,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Adaptive)]
    pub mode: Mode,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples_cap: u64,
    /// Explicit perturbation; requires --sigma and --gamma and bypasses the schedule.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Rounding constant to assume instead of the claimed or estimated one.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Attach exact optimum values for small instances.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Certificate JSON written by `cover` or `solve`.
    #[arg(long)]
    pub certificate: PathBuf,
    #[arg(long, default_value_t = VERIFY_TOL)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Everything one `cover` or `solve` invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub direction: Direction,
    pub input: PathBuf,
    pub input_format: InputFormat,
    pub kind: ProblemKind,
    pub dist: DistKind,
    pub beta: f64,
    pub seed: u64,
    pub mode: CoverMode,
    pub format: OutputFormat,
    pub oracle: bool,
    pub samples_cap: u64,
    pub output: Option<PathBuf>,
    pub schedule_override: Option<ScheduleOverride>,
    pub alpha: Option<f64>,
}

impl RunConfig {
    pub fn from_args(direction: Direction, a: &RunArgs) -> Result<Self, CliError> {
        if !(a.beta > 0.0 && a.beta < 1.0) {
            return Err(CliError::Usage(format!(
                "--beta {} is not in (0, 1)",
                a.beta
            )));
        }
        let schedule_override = match (a.eps, a.sigma, a.gamma) {
            (None, None, None) => None,
            (Some(eps), Some(sigma), Some(gamma)) => Some(ScheduleOverride { eps, sigma, gamma }),
            _ => {
                return Err(CliError::Usage(
                    "--eps, --sigma and --gamma must be given together".into(),
                ))
            }
        };
        Ok(RunConfig {
            direction,
            input: a.input.input.clone(),
            input_format: a.input.input_format,
            kind: a.input.kind,
            dist: a.input.dist.into(),
            beta: a.beta,
            seed: a.seed,
            mode: match a.mode {
                Mode::Theoretical => CoverMode::Theoretical,
                Mode::Adaptive => CoverMode::Adaptive,
            },
            format: a.format,
            oracle: a.oracle,
            samples_cap: a.samples_cap,
            output: a.output.clone(),
            schedule_override,
            alpha: a.alpha,
        })
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            mode: self.mode,
            samples_cap: self.samples_cap,
            alpha_override: self.alpha,
            schedule_override: self.schedule_override,
            ..PipelineConfig::new(self.beta, self.seed)
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let result = match &cli.command {
        Command::Cover(a) => RunConfig::from_args(Direction::Cover, a).and_then(|c| cmd_cover(&c)),
        Command::Solve(a) => RunConfig::from_args(Direction::Max, a).and_then(|c| cmd_solve(&c)),
        Command::EstimateAlpha(a) => cmd_estimate_alpha(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Sizes the global thread pool from [`THREADS_VAR`] when it is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        CliError::Usage(format!(
            "{THREADS_VAR} must be an integer >= 1, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

/// Covering direction: `z` in, `w` and certificate out.
pub fn cmd_cover(cfg: &RunConfig) -> Result<u8, CliError> {
    run_direction(&RunConfig {
        direction: Direction::Cover,
        ..cfg.clone()
    })
}

/// Maximization direction: `w` in, `z` and certificate out.
pub fn cmd_solve(cfg: &RunConfig) -> Result<u8, CliError> {
    run_direction(&RunConfig {
        direction: Direction::Max,
        ..cfg.clone()
    })
}

fn run_direction(cfg: &RunConfig) -> Result<u8, CliError> {
    let instance = parse_instance(&cfg.input, cfg.input_format, cfg.kind)?;
    let spec = instance.spec(cfg.dist)?;
    let out = run_pipeline(
        &spec,
        &instance.rounding(),
        cfg.direction,
        &instance.operand(),
        &cfg.pipeline(),
    )?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let mut doc = out.document();
    if cfg.oracle {
        doc.oracle = oracle_summary(&spec, &out)?;
        if doc.oracle.is_none() {
            eprintln!(
                "warning: instance too large for the oracle cross-check (order {})",
                spec.dim()
            );
        }
    }
    let body = match cfg.format {
        OutputFormat::Json => doc.to_json()?,
        OutputFormat::Text => text_summary(&out, doc.oracle.as_ref()),
    };
    emit(&body, cfg.output.as_deref())?;
    Ok(if out.report.pass() {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn oracle_summary(
    spec: &ConeSpec,
    out: &PipelineOutput,
) -> Result<Option<OracleSummary>, CliError> {
    if spec.dim() > MAX_ENUM_DIM {
        return Ok(None);
    }
    let w = out.payoff.payoff_matrix(spec)?;
    let best = brute_maxq(spec, &w)?;
    let OracleArg::Cut(maxq_cut) = best.argopt else {
        unreachable!("enumeration returns a cut")
    };
    let fevc = match &out.target {
        Operand::Vector(z) if spec.dim() - 1 <= MAX_LP_VARS => {
            Some(exact_fevc_target(spec, z)?.value)
        }
        _ => None,
    };
    Ok(Some(OracleSummary {
        maxq: best.value,
        maxq_cut,
        fevc,
    }))
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn clause_lines(s: &mut String, report: &VerificationReport) {
    let c = &report.summary;
    let rows = [
        ("(i)", "rho*mu = <W,Z>", format!("gap {:+.3e}", c.c1_gap)),
        (
            "(ii)",
            "q(W,s_U) >= beta*rho",
            format!("slack {:+.3e}", c.c2_cut),
        ),
        (
            "(iii)",
            "sum y_U S_U covers Z, <1,y> <= mu/beta",
            format!(
                "residual {:+.3e}  cost slack {:+.3e}",
                c.c3_cover_residual, c.c3_cost
            ),
        ),
        (
            "(iv)",
            "rho >= <1,x>, Diag(x)-W in Dist*",
            format!(
                "trace slack {:+.3e}  margin {:+.3e}",
                c.c4_trace, c.c4_dist_star
            ),
        ),
    ];
    for ((tag, claim, residuals), ok) in rows.into_iter().zip(report.clauses) {
        let _ = writeln!(s, "{tag:<6}{claim:<40}{residuals:<44}{}", mark(ok));
    }
    for p in &report.problems {
        let _ = writeln!(s, "problem: {p}");
    }
    let _ = writeln!(s, "verdict: {}", if c.pass { "PASS" } else { "FAIL" });
}

pub fn text_summary(out: &PipelineOutput, oracle: Option<&OracleSummary>) -> String {
    let cert = &out.certificate;
    let mut s = String::new();
    let dir = match out.direction {
        Direction::Cover => "cover",
        Direction::Max => "max",
    };
    let _ = writeln!(
        s,
        "direction {dir}  beta {}  alpha {:.6}  seed {}",
        cert.beta, cert.alpha_used, cert.seed
    );
    let _ = writeln!(
        s,
        "rho {:.9}  mu {:.9}  <W,Z> {:.9}",
        cert.rho, cert.mu, out.report.pairing
    );
    let _ = writeln!(
        s,
        "cut U = {:?}  q(W,s_U) = {:.9}",
        cert.cut.members(),
        out.report.cut_value
    );
    let _ = write!(
        s,
        "cover {} cuts  total weight {:.9}",
        cert.cover.len(),
        cert.cover.total_weight()
    );
    if let Some(meta) = &cert.cover.meta {
        let _ = write!(s, "  samples {}", meta.samples_used);
    }
    s.push('\n');
    if let Some(o) = oracle {
        let _ = write!(
            s,
            "oracle maxq {:.9} at U = {:?}",
            o.maxq,
            o.maxq_cut.members()
        );
        if let Some(f) = o.fevc {
            let _ = write!(s, "  fevc {f:.9}");
        }
        s.push('\n');
    }
    clause_lines(&mut s, &out.report);
    s
}

fn emit(body: &str, output: Option<&Path>) -> Result<(), CliError> {
    let mut body = body.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    match output {
        Some(path) => fs::write(path, body).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    alpha_hat: f64,
    confidence_halfwidth: f64,
    lower_bound: f64,
    samples: u64,
    excluded: Vec<usize>,
    nu_lower: f64,
    nu_upper: f64,
    seed: u64,
}

pub fn cmd_estimate_alpha(a: &EstimateArgs) -> Result<u8, CliError> {
    let instance = parse_instance(&a.input.input, a.input.input_format, a.input.kind)?;
    let spec = instance.spec(a.input.dist.into())?;
    let w = instance.operand().payoff_matrix(&spec)?;
    let nu = solve_nu(
        &spec,
        &w,
        &SolverConfig {
            tol: 1e-7,
            ..SolverConfig::default()
        },
    )?;
    let est = estimate_rounding_constant(
        &spec,
        &instance.rounding(),
        &nu.correlation,
        a.samples,
        a.seed,
    )?;
    let report = EstimateReport {
        alpha_hat: est.alpha_hat,
        confidence_halfwidth: est.confidence_halfwidth,
        lower_bound: est.lower_bound(),
        samples: est.samples,
        excluded: est.excluded.clone(),
        nu_lower: nu.lower,
        nu_upper: nu.upper,
        seed: a.seed,
    };
    let body = match a.format {
        OutputFormat::Json => to_json(&report)?,
        OutputFormat::Text => format!(
            "alpha_hat {:.6} +- {:.6} (lower bound {:.6}) from {} samples\nnu in [{:.9}, {:.9}]\nexcluded constraints {:?}",
            report.alpha_hat,
            report.confidence_halfwidth,
            report.lower_bound,
            report.samples,
            report.nu_lower,
            report.nu_upper,
            report.excluded
        ),
    };
    emit(&body, a.output.as_deref())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct OracleReport {
    maxq: f64,
    maxq_cut: Vec<usize>,
    assignment: Vec<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fevc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fevc_cover: Option<Vec<(Vec<usize>, f64)>>,
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<u8, CliError> {
    let instance = parse_instance(&a.input.input, a.input.input_format, a.input.kind)?;
    let spec = instance.spec(a.input.dist.into())?;
    let operand = instance.operand();
    let w = operand.payoff_matrix(&spec)?;
    let best = brute_maxq(&spec, &w)?;
    let OracleArg::Cut(cut) = best.argopt else {
        unreachable!("enumeration returns a cut")
    };
    let (fevc, fevc_cover) = match &operand {
        Operand::Vector(z) => {
            let res = exact_fevc_target(&spec, z)?;
            let OracleArg::Cover(cover) = res.argopt else {
                unreachable!("the covering LP returns a cover")
            };
            let entries = cover
                .entries()
                .iter()
                .map(|(u, &y)| (u.members().to_vec(), y))
                .collect();
            (Some(res.value), Some(entries))
        }
        Operand::Matrix(_) => (None, None),
    };
    let report = OracleReport {
        maxq: best.value,
        maxq_cut: cut.members().to_vec(),
        assignment: cut.assignment(),
        fevc,
        fevc_cover,
    };
    let body = match a.format {
        OutputFormat::Json => to_json(&report)?,
        OutputFormat::Text => {
            let mut s = format!("maxq {:.9} at U = {:?}", report.maxq, report.maxq_cut);
            if let Some(f) = report.fevc {
                let _ = write!(
                    s,
                    "\nfevc {f:.9} over {} cuts",
                    report.fevc_cover.as_ref().map_or(0, Vec::len)
                );
            }
            s
        }
    };
    emit(&body, a.output.as_deref())?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<u8, CliError> {
    let instance = parse_instance(&a.input.input, a.input.input_format, a.input.kind)?;
    let spec = instance.spec(a.input.dist.into())?;
    let text = fs::read_to_string(&a.certificate).map_err(|source| CliError::Io {
        path: a.certificate.display().to_string(),
        source,
    })?;
    let doc = CertificateDocument::from_json(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", a.certificate.display())))?;
    let given = instance.operand();
    let (w, z) = match doc.direction {
        Direction::Cover => (&doc.paired, &given),
        Direction::Max => (&given, &doc.paired),
    };
    let report = verify_certificate(&spec, w, z, &doc.certificate, a.tol);
    let body = match a.format {
        OutputFormat::Json => to_json(&report.summary)?,
        OutputFormat::Text => {
            let mut s = String::new();
            clause_lines(&mut s, &report);
            s
        }
    };
    emit(&body, a.output.as_deref())?;
    Ok(if report.pass() {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let budget = CliError::Core(Error::BudgetExhausted {
            samples: 10,
            best_ratio: 2.0,
        });
        assert_eq!(budget.exit_code(), EXIT_BUDGET);
        let beta = CliError::Core(Error::BetaInfeasible {
            beta: 0.99,
            alpha: 0.878,
        });
        assert_eq!(beta.exit_code(), EXIT_INPUT);
        assert_eq!(CliError::Parse("x".into()).exit_code(), EXIT_INPUT);
        assert_eq!(
            CliError::Core(Error::Numerical("x".into())).exit_code(),
            EXIT_VERIFY_FAILED
        );
    }

    #[test]
    fn partial_override_rejected() {
        let cli = Cli::try_parse_from([
            "grothcover",
            "cover",
            "--input",
            "k.json",
            "--beta",
            "0.8",
            "--eps",
            "0.1",
        ])
        .unwrap();
        let Command::Cover(args) = cli.command else {
            panic!("expected cover")
        };
        assert!(matches!(
            RunConfig::from_args(Direction::Cover, &args),
            Err(CliError::Usage(_))
        ));
    }
}
