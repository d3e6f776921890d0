//! Command-line front end: flat key-value configuration, the
//! solve/certify/verify/sweep commands, and deterministic CSV/JSON output.
//!
//! Exit codes are a stable contract:
//! 0 ok, 1 config, 2 non-convergence, 3 uncertifiable mass,
//! 4 oracle mismatch, 5 oracle bracket failure.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::certify::{empirical_estimates, ContractionCertificate, EstimateReport};
use crate::model::{NonlinearitySpec, ProblemParams, ProfilePair, RadialGrid};
use crate::operator::{density, potential};
use crate::oracle::{compare_profiles, shoot_solve, OracleError, ShootResult};
use crate::solver::{picard_solve, residual_sup, SolveOptions, SolveReport, SolverError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_UNCERTIFIABLE: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_BRACKET: i32 = 5;

/// Trials behind the `certify` command's estimate probe.
const CERTIFY_TRIALS: usize = 100;
/// Boundary-gap tolerance handed to the shooting construction by `verify`.
const SHOOT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable { path: String, source: io::Error },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("duplicate config key `{0}`")]
    DuplicateKey(String),
    #[error("key `{key}`: {message}")]
    BadValue { key: &'static str, message: String },
    #[error("key `{0}` is required for this command")]
    Missing(&'static str),
    #[error("mass list: {0}")]
    BadMassList(String),
    #[error("nonlinearity table {path}: {message}")]
    BadTable { path: String, message: String },
}

/// Everything a run reads from its config file, validated key by key at
/// load time so failures name the offending line before any computation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dimension: f64,
    pub mass: Option<f64>,
    pub nonlinearity_kind: String,
    pub nonlinearity_scale: Option<f64>,
    pub nonlinearity_table: Option<PathBuf>,
    pub nonlinearity_lipschitz: f64,
    pub grid_n: usize,
    pub grid_gamma: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub verify_tol: f64,
    pub output_profile_csv: PathBuf,
    pub output_report_json: PathBuf,
    pub seed: u64,
}

fn parse_f64(key: &'static str, raw: &str) -> Result<f64, ConfigError> {
    let value: f64 = raw.parse().map_err(|_| ConfigError::BadValue {
        key,
        message: format!("`{raw}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(ConfigError::BadValue { key, message: format!("`{raw}` is not finite") });
    }
    Ok(value)
}

fn parse_usize(key: &'static str, raw: &str) -> Result<usize, ConfigError> {
    raw.parse().map_err(|_| ConfigError::BadValue {
        key,
        message: format!("`{raw}` is not a nonnegative integer"),
    })
}

fn parse_u64(key: &'static str, raw: &str) -> Result<u64, ConfigError> {
    raw.parse().map_err(|_| ConfigError::BadValue {
        key,
        message: format!("`{raw}` is not a nonnegative integer"),
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Parses `key = value` lines; `#` starts a full-line comment. Dotted
    /// key names are literal.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut raw: HashMap<String, String> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or(ConfigError::Syntax { line: idx + 1 })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line: idx + 1 });
            }
            if raw.insert(key.clone(), value).is_some() {
                return Err(ConfigError::DuplicateKey(key));
            }
        }

        let mut take = |key: &str| raw.remove(key);

        let dimension = match take("dimension") {
            Some(v) => parse_f64("dimension", &v)?,
            None => 3.0,
        };
        if !(dimension > 2.0) {
            return Err(ConfigError::BadValue {
                key: "dimension",
                message: format!("must exceed 2, got {dimension}"),
            });
        }
        let mass = match take("mass") {
            Some(v) => Some(parse_f64("mass", &v)?),
            None => None,
        };
        if let Some(m) = mass {
            if !(m > 0.0) {
                return Err(ConfigError::BadValue {
                    key: "mass",
                    message: format!("must be positive, got {m}"),
                });
            }
        }
        let nonlinearity_kind =
            take("nonlinearity.kind").unwrap_or_else(|| "identity".to_string());
        let nonlinearity_scale = match take("nonlinearity.scale") {
            Some(v) => Some(parse_f64("nonlinearity.scale", &v)?),
            None => None,
        };
        let nonlinearity_table = take("nonlinearity.table").map(PathBuf::from);
        let nonlinearity_lipschitz = match take("nonlinearity.lipschitz") {
            Some(v) => parse_f64("nonlinearity.lipschitz", &v)?,
            None => 1.0,
        };
        if !(nonlinearity_lipschitz > 0.0) {
            return Err(ConfigError::BadValue {
                key: "nonlinearity.lipschitz",
                message: format!("must be positive, got {nonlinearity_lipschitz}"),
            });
        }
        match nonlinearity_kind.as_str() {
            "identity" | "saturating" => {
                if nonlinearity_lipschitz != 1.0 {
                    return Err(ConfigError::BadValue {
                        key: "nonlinearity.lipschitz",
                        message: format!(
                            "the {nonlinearity_kind} response has slope 1 at the origin; \
                             its Lipschitz constant is 1, got {nonlinearity_lipschitz}"
                        ),
                    });
                }
            }
            "table" => {}
            other => {
                return Err(ConfigError::BadValue {
                    key: "nonlinearity.kind",
                    message: format!(
                        "`{other}` is not one of identity, saturating, table"
                    ),
                });
            }
        }
        if nonlinearity_kind == "saturating" {
            match nonlinearity_scale {
                Some(s) if s > 0.0 => {}
                Some(s) => {
                    return Err(ConfigError::BadValue {
                        key: "nonlinearity.scale",
                        message: format!("must be positive, got {s}"),
                    });
                }
                None => return Err(ConfigError::Missing("nonlinearity.scale")),
            }
        } else if nonlinearity_scale.is_some() {
            return Err(ConfigError::BadValue {
                key: "nonlinearity.scale",
                message: "only applies to nonlinearity.kind = saturating".into(),
            });
        }
        if nonlinearity_kind == "table" {
            if nonlinearity_table.is_none() {
                return Err(ConfigError::Missing("nonlinearity.table"));
            }
        } else if nonlinearity_table.is_some() {
            return Err(ConfigError::BadValue {
                key: "nonlinearity.table",
                message: "only applies to nonlinearity.kind = table".into(),
            });
        }

        let grid_n = match take("grid.n") {
            Some(v) => parse_usize("grid.n", &v)?,
            None => 2048,
        };
        if grid_n < 16 {
            return Err(ConfigError::BadValue {
                key: "grid.n",
                message: format!("needs at least 16 intervals, got {grid_n}"),
            });
        }
        let grid_gamma = match take("grid.gamma") {
            Some(v) => parse_f64("grid.gamma", &v)?,
            None => 2.0,
        };
        if !(grid_gamma >= 1.0) {
            return Err(ConfigError::BadValue {
                key: "grid.gamma",
                message: format!("grading must be at least 1, got {grid_gamma}"),
            });
        }
        let solver_tol = match take("solver.tol") {
            Some(v) => parse_f64("solver.tol", &v)?,
            None => 1e-12,
        };
        if !(solver_tol > 0.0) {
            return Err(ConfigError::BadValue {
                key: "solver.tol",
                message: format!("must be positive, got {solver_tol}"),
            });
        }
        let solver_max_iter = match take("solver.max_iter") {
            Some(v) => parse_usize("solver.max_iter", &v)?,
            None => 200,
        };
        if solver_max_iter == 0 {
            return Err(ConfigError::BadValue {
                key: "solver.max_iter",
                message: "needs at least one iteration".into(),
            });
        }
        let verify_tol = match take("verify.tol") {
            Some(v) => parse_f64("verify.tol", &v)?,
            None => 1e-4,
        };
        if verify_tol < 0.0 {
            return Err(ConfigError::BadValue {
                key: "verify.tol",
                message: format!("must be nonnegative, got {verify_tol}"),
            });
        }
        let output_profile_csv =
            take("output.profile_csv").map(PathBuf::from).unwrap_or_else(|| "profile.csv".into());
        let output_report_json =
            take("output.report_json").map(PathBuf::from).unwrap_or_else(|| "report.json".into());
        let seed = match take("seed") {
            Some(v) => parse_u64("seed", &v)?,
            None => 42,
        };

        if let Some(key) = raw.keys().next() {
            return Err(ConfigError::UnknownKey(key.clone()));
        }

        Ok(RunConfig {
            dimension,
            mass,
            nonlinearity_kind,
            nonlinearity_scale,
            nonlinearity_table,
            nonlinearity_lipschitz,
            grid_n,
            grid_gamma,
            solver_tol,
            solver_max_iter,
            verify_tol,
            output_profile_csv,
            output_report_json,
            seed,
        })
    }

    fn response(&self) -> Result<NonlinearitySpec<f64>, ConfigError> {
        match self.nonlinearity_kind.as_str() {
            "identity" => Ok(NonlinearitySpec::identity()),
            "saturating" => NonlinearitySpec::saturating(
                self.nonlinearity_scale.expect("scale checked at load"),
            )
            .map_err(|e| ConfigError::BadValue {
                key: "nonlinearity.scale",
                message: e.to_string(),
            }),
            "table" => {
                let path = self.nonlinearity_table.as_ref().expect("path checked at load");
                let points = load_table(path)?;
                NonlinearitySpec::tabulated(points, self.nonlinearity_lipschitz).map_err(|e| {
                    ConfigError::BadTable {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    }
                })
            }
            _ => unreachable!("kind checked at load"),
        }
    }

    /// Problem parameters at the configured mass; `mass` must be present.
    pub fn problem(&self) -> Result<ProblemParams<f64>, ConfigError> {
        let mass = self.mass.ok_or(ConfigError::Missing("mass"))?;
        self.problem_with_mass(mass)
    }

    pub fn problem_with_mass(&self, mass: f64) -> Result<ProblemParams<f64>, ConfigError> {
        let response = self.response()?;
        ProblemParams::new(self.dimension, mass, response).map_err(|e| ConfigError::BadValue {
            key: "mass",
            message: e.to_string(),
        })
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid<f64>>, ConfigError> {
        RadialGrid::make(self.grid_n, self.grid_gamma).map_err(|e| ConfigError::BadValue {
            key: "grid.n",
            message: e.to_string(),
        })
    }
}

/// Reads a `(z, R(z))` table: one pair per line, separated by a comma or
/// whitespace; `#` lines are comments.
fn load_table(path: &Path) -> Result<Vec<(f64, f64)>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::BadTable {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> =
            line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if fields.len() != 2 {
            return Err(ConfigError::BadTable {
                path: path.display().to_string(),
                message: format!("line {}: expected two numbers", idx + 1),
            });
        }
        let z: f64 = fields[0].parse().map_err(|_| ConfigError::BadTable {
            path: path.display().to_string(),
            message: format!("line {}: `{}` is not a number", idx + 1, fields[0]),
        })?;
        let v: f64 = fields[1].parse().map_err(|_| ConfigError::BadTable {
            path: path.display().to_string(),
            message: format!("line {}: `{}` is not a number", idx + 1, fields[1]),
        })?;
        points.push((z, v));
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Report views. Field order is declaration order, and all floats go through
// the 17-significant-digit formatter, so identical runs serialize to
// identical bytes.

#[derive(Serialize)]
struct NonlinearityView {
    kind: String,
    scale: Option<f64>,
    table: Option<String>,
    lipschitz: f64,
}

#[derive(Serialize)]
struct ParamsView {
    dimension: f64,
    mass: Option<f64>,
    nonlinearity: NonlinearityView,
    grid_n: usize,
    grid_gamma: f64,
    sigma_d: f64,
    seed: u64,
}

#[derive(Serialize)]
struct MarginsView {
    value_self_map: f64,
    slope_self_map: f64,
    value_lipschitz: f64,
    slope_lipschitz: f64,
}

#[derive(Serialize)]
struct EstimatesView {
    trials: usize,
    seed: u64,
    min_margins: MarginsView,
    min_margin: f64,
    max_ratio: f64,
    violations: usize,
}

#[derive(Serialize)]
struct CertificateView {
    #[serde(rename = "A1")]
    a1: f64,
    #[serde(rename = "A2")]
    a2: f64,
    #[serde(rename = "A3")]
    a3: f64,
    #[serde(rename = "A4")]
    a4: f64,
    rho_lo: Option<f64>,
    rho_hi: Option<f64>,
    m_max: f64,
    chosen_rho: Option<f64>,
    q_bound: Option<f64>,
    certified: bool,
    estimates: Option<EstimatesView>,
}

#[derive(Serialize)]
struct ConeView {
    passes: bool,
    min_slope: f64,
}

#[derive(Serialize)]
struct SolveView {
    iterations: usize,
    final_update: f64,
    empirical_rate: Option<f64>,
    residual_sup: f64,
    posterior_bound: Option<f64>,
    certified: bool,
    central_density: f64,
    cone: ConeView,
}

#[derive(Serialize)]
struct ShootView {
    central_density: f64,
    shots: usize,
    residual_sup: f64,
}

#[derive(Serialize)]
struct VerifyView {
    sup_q: f64,
    sup_qprime: f64,
    weighted_pair: f64,
    tol: f64,
    agrees: bool,
    shoot: ShootView,
}

#[derive(Serialize)]
struct ErrorView {
    code: i32,
    kind: String,
    message: String,
}

#[derive(Serialize, Default)]
struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<ParamsView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<CertificateView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve: Option<SolveView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verify: Option<VerifyView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorView>,
}

fn params_view(config: &RunConfig, mass: Option<f64>, sigma_d: f64) -> ParamsView {
    ParamsView {
        dimension: config.dimension,
        mass,
        nonlinearity: NonlinearityView {
            kind: config.nonlinearity_kind.clone(),
            scale: config.nonlinearity_scale,
            table: config.nonlinearity_table.as_ref().map(|p| p.display().to_string()),
            lipschitz: config.nonlinearity_lipschitz,
        },
        grid_n: config.grid_n,
        grid_gamma: config.grid_gamma,
        sigma_d,
        seed: config.seed,
    }
}

fn certificate_view(
    cert: &ContractionCertificate<f64>,
    estimates: Option<EstimatesView>,
) -> CertificateView {
    CertificateView {
        a1: cert.constants.a1,
        a2: cert.constants.a2,
        a3: cert.constants.a3,
        a4: cert.constants.a4,
        rho_lo: cert.rho_lo,
        rho_hi: cert.rho_hi,
        m_max: cert.m_max,
        chosen_rho: cert.chosen_rho,
        q_bound: cert.q_bound,
        certified: cert.is_certified(),
        estimates,
    }
}

fn estimates_view(report: &EstimateReport<f64>, seed: u64) -> EstimatesView {
    EstimatesView {
        trials: report.trials,
        seed,
        min_margins: MarginsView {
            value_self_map: report.min_margins[0],
            slope_self_map: report.min_margins[1],
            value_lipschitz: report.min_margins[2],
            slope_lipschitz: report.min_margins[3],
        },
        min_margin: report.min_margin,
        max_ratio: report.max_ratio,
        violations: report.violations.len(),
    }
}

fn solve_view(report: &SolveReport<f64>, central_density: f64) -> SolveView {
    SolveView {
        iterations: report.iterations,
        final_update: report.final_update,
        empirical_rate: report.empirical_rate,
        residual_sup: report.residual_sup,
        posterior_bound: report.posterior_bound,
        certified: report.certified,
        central_density,
        cone: ConeView { passes: report.cone.passes, min_slope: report.cone.min_slope },
    }
}

// ---------------------------------------------------------------------------
// Serialization with a fixed float format.

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    /// 17 significant digits: floats round-trip exactly, so regression
    /// baselines can compare bytes.
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.8e}")
    }
}

fn render_json<S: Serialize>(value: &S) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    buf.push(b'\n');
    Ok(buf)
}

fn write_json(path: &Path, value: &Report) -> io::Result<()> {
    fs::write(path, render_json(value)?)
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the profile CSV: header `r,Q,Qprime,density,potential`, one row
/// per node, ascending.
pub fn write_profile_csv(
    path: &Path,
    profile: &ProfilePair<f64>,
    density: &[f64],
    potential: &[f64],
) -> io::Result<()> {
    let nodes = profile.grid().nodes();
    let mut out = String::with_capacity(nodes.len() * 120);
    out.push_str("r,Q,Qprime,density,potential\n");
    for i in 0..nodes.len() {
        out.push_str(&fmt_float(nodes[i]));
        out.push(',');
        out.push_str(&fmt_float(profile.q()[i]));
        out.push(',');
        out.push_str(&fmt_float(profile.qprime()[i]));
        out.push(',');
        out.push_str(&fmt_float(density[i]));
        out.push(',');
        out.push_str(&fmt_float(potential[i]));
        out.push('\n');
    }
    fs::write(path, out)
}

/// One `sweep` result row; failed masses carry NaN metrics.
pub struct SweepRow {
    pub m: f64,
    pub central_density: f64,
    pub iterations: usize,
    pub certified: bool,
    pub residual_sup: f64,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> io::Result<()> {
    let mut out = String::with_capacity(rows.len() * 80 + 64);
    out.push_str("m,central_density,iterations,certified,residual_sup\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_float(row.m),
            fmt_float(row.central_density),
            row.iterations,
            row.certified,
            fmt_float(row.residual_sup),
        ));
    }
    fs::write(path, out)
}

// ---------------------------------------------------------------------------
// Commands.

#[derive(Debug, Clone)]
pub enum CliCommand {
    Solve,
    Certify,
    Verify,
    Sweep { mass_list: Option<String> },
}

/// Entry point behind the binary: loads the config and dispatches. Returns
/// the process exit code; every failure after a successful config load also
/// leaves a machine-readable error object at the report path.
pub fn run(command: CliCommand, config_path: &Path) -> i32 {
    let config = match RunConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    match command {
        CliCommand::Solve => cmd_solve(&config),
        CliCommand::Certify => cmd_certify(&config),
        CliCommand::Verify => cmd_verify(&config),
        CliCommand::Sweep { mass_list } => cmd_sweep(&config, mass_list.as_deref()),
    }
}

/// Writes an error-bearing report (best effort) and returns the exit code.
fn fail(config: &RunConfig, mut report: Report, code: i32, kind: &str, message: impl Display) -> i32 {
    let message = message.to_string();
    eprintln!("{kind}: {message}");
    report.error = Some(ErrorView { code, kind: kind.into(), message });
    if let Err(e) = write_json(&config.output_report_json, &report) {
        eprintln!("cannot write report {}: {e}", config.output_report_json.display());
    }
    code
}

fn solver_failure(config: &RunConfig, report: Report, err: SolverError<f64>) -> i32 {
    let kind = match &err {
        SolverError::NotConverged { .. } => "non_convergence",
        SolverError::Diverged { .. } => "divergence",
        _ => "solver",
    };
    fail(config, report, EXIT_NO_CONVERGENCE, kind, err)
}

/// Shared solve pipeline: parameters, grid, iteration, fields, CSV. On
/// success the report carries params/certificate/solve and the profile CSV
/// is on disk.
fn run_solve_pipeline(
    config: &RunConfig,
) -> Result<(Report, SolveReport<f64>, ProblemParams<f64>, Arc<RadialGrid<f64>>), i32> {
    let mut report = Report::default();
    let params = match config.problem() {
        Ok(p) => p,
        Err(e) => return Err(fail(config, report, EXIT_CONFIG, "config", e)),
    };
    report.params = Some(params_view(config, Some(params.mass()), params.sigma_d()));
    let grid = match config.grid() {
        Ok(g) => g,
        Err(e) => return Err(fail(config, report, EXIT_CONFIG, "config", e)),
    };
    let options = SolveOptions {
        tol: config.solver_tol,
        max_iter: config.solver_max_iter,
        initial: None,
    };
    let solved = match picard_solve(&params, &grid, &options) {
        Ok(s) => s,
        Err(e) => return Err(solver_failure(config, report, e)),
    };
    report.certificate = Some(certificate_view(&solved.certificate, None));

    let n = match density(&solved.profile, &params) {
        Ok(n) => n,
        Err(e) => return Err(fail(config, report, EXIT_NO_CONVERGENCE, "fields", e)),
    };
    let phi = match potential(&solved.profile, &params) {
        Ok(p) => p,
        Err(e) => return Err(fail(config, report, EXIT_NO_CONVERGENCE, "fields", e)),
    };
    report.solve = Some(solve_view(&solved, n[0]));
    if let Err(e) = write_profile_csv(&config.output_profile_csv, &solved.profile, &n, &phi) {
        let msg = format!("cannot write {}: {e}", config.output_profile_csv.display());
        return Err(fail(config, report, EXIT_CONFIG, "io", msg));
    }
    Ok((report, solved, params, grid))
}

fn finish(config: &RunConfig, report: &Report, code: i32) -> i32 {
    if let Err(e) = write_json(&config.output_report_json, report) {
        eprintln!("cannot write report {}: {e}", config.output_report_json.display());
        return EXIT_CONFIG;
    }
    code
}

fn cmd_solve(config: &RunConfig) -> i32 {
    match run_solve_pipeline(config) {
        Ok((report, _, _, _)) => finish(config, &report, EXIT_OK),
        Err(code) => code,
    }
}

fn cmd_certify(config: &RunConfig) -> i32 {
    let mut report = Report::default();
    // The constants and the mass threshold are mass-independent, so a
    // missing mass still yields a meaningful certificate skeleton; the
    // placeholder never reaches the report.
    let params = match config.problem_with_mass(config.mass.unwrap_or(1.0)) {
        Ok(p) => p,
        Err(e) => return fail(config, report, EXIT_CONFIG, "config", e),
    };
    report.params = Some(params_view(config, config.mass, params.sigma_d()));
    let cert = ContractionCertificate::build(&params);

    let estimates = match (config.mass, cert.chosen_rho) {
        (Some(_), Some(rho)) => {
            let grid = match config.grid() {
                Ok(g) => g,
                Err(e) => return fail(config, report, EXIT_CONFIG, "config", e),
            };
            match empirical_estimates(&params, &grid, rho, CERTIFY_TRIALS, config.seed) {
                Ok(est) => Some(estimates_view(&est, config.seed)),
                Err(e) => return fail(config, report, EXIT_CONFIG, "certify", e),
            }
        }
        _ => None,
    };
    let certified = cert.is_certified();
    let m_max = cert.m_max;
    report.certificate = Some(certificate_view(&cert, estimates));

    match config.mass {
        None => finish(config, &report, EXIT_OK),
        Some(_) if certified => finish(config, &report, EXIT_OK),
        Some(m) => {
            let msg = format!("mass {m} is not certifiable; the threshold is {m_max}");
            fail(config, report, EXIT_UNCERTIFIABLE, "uncertifiable_mass", msg)
        }
    }
}

fn cmd_verify(config: &RunConfig) -> i32 {
    let (mut report, solved, params, grid) = match run_solve_pipeline(config) {
        Ok(parts) => parts,
        Err(code) => return code,
    };
    let shot: ShootResult<f64> = match shoot_solve(&params, &grid, SHOOT_TOL) {
        Ok(s) => s,
        Err(e @ OracleError::Bracket { .. }) => {
            return fail(config, report, EXIT_BRACKET, "oracle_bracket", e);
        }
        Err(e @ OracleError::ToleranceNotReached { .. }) => {
            return fail(config, report, EXIT_BRACKET, "oracle_tolerance", e);
        }
        Err(e) => return fail(config, report, EXIT_BRACKET, "oracle", e),
    };
    let comparison = match compare_profiles(&solved.profile, &shot.profile, params.d()) {
        Ok(c) => c,
        Err(e) => return fail(config, report, EXIT_MISMATCH, "compare", e),
    };
    let agrees = comparison.weighted_pair <= config.verify_tol;
    report.verify = Some(VerifyView {
        sup_q: comparison.sup_q,
        sup_qprime: comparison.sup_qprime,
        weighted_pair: comparison.weighted_pair,
        tol: config.verify_tol,
        agrees,
        shoot: ShootView {
            central_density: shot.central_density,
            shots: shot.shots,
            residual_sup: residual_sup(&params, &shot.profile),
        },
    });
    if agrees {
        finish(config, &report, EXIT_OK)
    } else {
        let msg = format!(
            "weighted pair difference {} exceeds verify.tol {}",
            comparison.weighted_pair, config.verify_tol
        );
        fail(config, report, EXIT_MISMATCH, "oracle_mismatch", msg)
    }
}

fn parse_mass_list(raw: &str) -> Result<Vec<f64>, ConfigError> {
    let mut masses = Vec::new();
    for piece in raw.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let m: f64 = piece
            .parse()
            .map_err(|_| ConfigError::BadMassList(format!("`{piece}` is not a number")))?;
        if !(m > 0.0) || !m.is_finite() {
            return Err(ConfigError::BadMassList(format!("mass {m} must be positive")));
        }
        masses.push(m);
    }
    if masses.is_empty() {
        return Err(ConfigError::BadMassList("no masses given".into()));
    }
    Ok(masses)
}

fn cmd_sweep(config: &RunConfig, mass_list: Option<&str>) -> i32 {
    let report = Report::default();
    let masses = match mass_list.ok_or(ConfigError::Missing("--mass-list")).and_then(parse_mass_list) {
        Ok(m) => m,
        Err(e) => return fail(config, report, EXIT_CONFIG, "config", e),
    };
    let grid = match config.grid() {
        Ok(g) => g,
        Err(e) => return fail(config, report, EXIT_CONFIG, "config", e),
    };
    let options = SolveOptions {
        tol: config.solver_tol,
        max_iter: config.solver_max_iter,
        initial: None,
    };
    let mut rows = Vec::with_capacity(masses.len());
    for &m in &masses {
        let params = match config.problem_with_mass(m) {
            Ok(p) => p,
            Err(e) => return fail(config, report, EXIT_CONFIG, "config", e),
        };
        let row = match picard_solve(&params, &grid, &options) {
            Ok(solved) => {
                let central = match density(&solved.profile, &params) {
                    Ok(n) => n[0],
                    Err(_) => f64::NAN,
                };
                SweepRow {
                    m,
                    central_density: central,
                    iterations: solved.iterations,
                    certified: solved.certified,
                    residual_sup: solved.residual_sup,
                }
            }
            Err(e) => {
                eprintln!("mass {m}: {e}");
                SweepRow {
                    m,
                    central_density: f64::NAN,
                    iterations: 0,
                    certified: false,
                    residual_sup: f64::NAN,
                }
            }
        };
        rows.push(row);
    }
    if let Err(e) = write_sweep_csv(&config.output_profile_csv, &rows) {
        let msg = format!("cannot write {}: {e}", config.output_profile_csv.display());
        return fail(config, report, EXIT_CONFIG, "io", msg);
    }
    EXIT_OK
}
