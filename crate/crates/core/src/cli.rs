//! `contact-hj` front end: JSON run configuration in, CSV out.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact_system::{builtin_hamiltonian, builtin_system, ContactSystem, HamiltonianSystem};
use crate::error::Error;
use crate::herglotz::{fundamental_direct, fundamental_shooting, herglotz_residual, ShootingParams, T_MIN};
use crate::hj_solver::{builtin_datum, mu_radius, solve_value_grid, tensor_grid, InitialDatum, SearchParams};
use crate::invariants::{run_invariants, CheckParams};
use crate::vanishing::{builtin_family, run_vanishing, LambdaFamily, MONOTONE_TOL};

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "CONTACT_HJ_THREADS";

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const TOLERANCE: i32 = 4;
    pub const INVARIANT: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "contact-hj", version, about = "Contact Hamilton-Jacobi solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; overrides the configured one. Defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    /// Fundamental solution by direct minimization and by shooting.
    Fundamental,
    /// Viscosity solution on a time-space grid.
    Solve,
    /// Vanishing-contact convergence study.
    Vanishing,
    /// Invariant suite for a system and datum.
    Check,
}

/// A built-in system by id, optionally overriding its declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Id(String),
    Inline {
        id: String,
        #[serde(default)]
        k: Option<f64>,
        #[serde(default)]
        c0: Option<f64>,
    },
}

/// A built-in datum by id, optionally overriding its declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatumSpec {
    Id(String),
    Inline {
        id: String,
        #[serde(default)]
        lip: Option<f64>,
        #[serde(default)]
        sup_abs: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: f64,
}

/// Times and a tensor grid of `resolution` points per axis on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub times: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanishingSpec {
    pub family: String,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

fn default_gap_tol() -> f64 {
    0.05
}

fn default_system() -> SystemSpec {
    SystemSpec::Id("quadratic".into())
}

fn default_dim() -> usize {
    1
}

fn default_segments() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub command: Option<CommandKind>,
    #[serde(default = "default_system")]
    pub system: SystemSpec,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub datum: Option<DatumSpec>,
    #[serde(default)]
    pub queries: Vec<Query>,
    /// Curve segments for `fundamental`.
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default)]
    pub shooting: ShootingParams,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub vanishing: Option<VanishingSpec>,
    #[serde(default)]
    pub check: CheckParams,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Solver(Error),
    Tolerance(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => exit::CONFIG,
            Failure::Solver(_) => exit::SOLVER,
            Failure::Tolerance(_) => exit::TOLERANCE,
            Failure::Invariant(_) => exit::INVARIANT,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Precondition(_) | Error::UnknownId(_) => Failure::Config(e.to_string()),
            e => Failure::Solver(e),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn config_err<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Config(msg.into()))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    fn resolve_system(&self) -> Outcome<(ContactSystem, HamiltonianSystem)> {
        let (id, k, c0) = match &self.system {
            SystemSpec::Id(id) => (id, None, None),
            SystemSpec::Inline { id, k, c0 } => (id, *k, *c0),
        };
        let mut system = builtin_system(id, self.dim)?;
        let hs = builtin_hamiltonian(id, self.dim)?;
        let mut growth = system.growth().clone();
        if let Some(k) = k {
            check_nonneg("system.k", k)?;
            growth = growth.with_k(k);
        }
        if let Some(c0) = c0 {
            check_nonneg("system.c0", c0)?;
            growth = growth.with_c0(c0);
        }
        system = system.with_growth(growth);
        Ok((system, hs))
    }

    fn resolve_datum(&self) -> Outcome<Option<InitialDatum>> {
        let Some(spec) = &self.datum else { return Ok(None) };
        let (id, lip, sup) = match spec {
            DatumSpec::Id(id) => (id, None, None),
            DatumSpec::Inline { id, lip, sup_abs } => (id, *lip, *sup_abs),
        };
        let mut d = builtin_datum(id)?;
        if let Some(l) = lip {
            check_nonneg("datum.lip", l)?;
            d.lip = l;
        }
        if let Some(s) = sup {
            check_nonneg("datum.sup_abs", s)?;
            d.sup_abs = s;
        }
        Ok(Some(d))
    }

    fn require_datum(&self) -> Outcome<InitialDatum> {
        self.resolve_datum()?.map_or_else(|| config_err("`datum` is required"), Ok)
    }

    fn resolve_grid(&self) -> Outcome<(Vec<f64>, Vec<Vec<f64>>, Vec<usize>)> {
        let Some(g) = &self.grid else { return config_err("`grid` is required") };
        if g.times.is_empty() || g.times.iter().any(|t| !t.is_finite() || *t <= T_MIN) {
            return config_err("grid.times must be non-empty, finite and positive");
        }
        if g.times.windows(2).any(|w| !(w[1] > w[0])) {
            return config_err("grid.times must be strictly increasing");
        }
        if g.lo.len() != self.dim || g.hi.len() != self.dim {
            return config_err(format!("grid.lo and grid.hi need {} coordinates", self.dim));
        }
        if g.lo.iter().chain(&g.hi).any(|c| !c.is_finite()) || g.lo.iter().zip(&g.hi).any(|(a, b)| a > b) {
            return config_err("grid box must be finite with lo <= hi");
        }
        if g.resolution == 0 {
            return config_err("grid.resolution must be positive");
        }
        let (points, shape) = tensor_grid(&g.lo, &g.hi, g.resolution);
        Ok((g.times.clone(), points, shape))
    }

    fn validate_common(&self, command: CommandKind) -> Outcome<()> {
        if let Some(c) = self.command {
            if c != command {
                return config_err(format!("config is for `{c:?}` but `{command:?}` was requested"));
            }
        }
        if !(1..=crate::contact_system::MAX_DIM).contains(&self.dim) {
            return config_err(format!("dim must be 1 or 2, got {}", self.dim));
        }
        let s = &self.search;
        let o = &s.optimizer;
        check_unit("search.ytol", s.ytol)?;
        check_unit("search.optimizer.tol", o.tol)?;
        check_unit("search.optimizer.gtol", o.gtol)?;
        check_unit("search.optimizer.fd_step", o.fd_step)?;
        check_unit("shooting.newton_tol", self.shooting.newton_tol)?;
        check_unit("shooting.fd_step", self.shooting.fd_step)?;
        if s.segments < 2 || s.grid_points < 2 || s.refine_candidates == 0 || o.max_iter == 0 || o.substeps == 0 {
            return config_err("search resolutions must be positive (segments and grid_points at least 2)");
        }
        if self.shooting.steps == 0 || self.shooting.grid_per_axis == 0 || self.shooting.max_newton == 0 {
            return config_err("shooting resolutions must be positive");
        }
        Ok(())
    }
}

fn check_unit(name: &str, v: f64) -> Outcome<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        config_err(format!("{name} must lie in (0, 1), got {v}"))
    }
}

fn check_nonneg(name: &str, v: f64) -> Outcome<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        config_err(format!("{name} must be finite and nonnegative, got {v}"))
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn axis_names(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=dim).map(|i| format!("{prefix}{i}")).collect()
    }
}

fn push_row(buf: &mut String, cells: impl IntoIterator<Item = String>) {
    let row: Vec<String> = cells.into_iter().collect();
    buf.push_str(&row.join(","));
    buf.push('\n');
}

/// Rendered outputs of one command.
struct Report {
    csv: String,
    sidecar: Option<serde_json::Value>,
    status: Outcome<()>,
}

fn cmd_fundamental(cfg: &RunConfig) -> Outcome<Report> {
    cfg.validate_common(CommandKind::Fundamental)?;
    let (system, hs) = cfg.resolve_system()?;
    if cfg.queries.is_empty() {
        return config_err("`queries` must list at least one (t, x, y, u)");
    }
    if cfg.segments < 4 {
        return config_err("segments must be at least 4");
    }
    for (i, q) in cfg.queries.iter().enumerate() {
        if !q.t.is_finite() || q.t <= T_MIN {
            return config_err(format!("queries[{i}].t must be positive, got {}", q.t));
        }
        if q.x.len() != cfg.dim || q.y.len() != cfg.dim {
            return config_err(format!("queries[{i}] needs {}-dimensional x and y", cfg.dim));
        }
        if !q.u.is_finite() || q.x.iter().chain(&q.y).any(|c| !c.is_finite()) {
            return config_err(format!("queries[{i}] has non-finite entries"));
        }
    }
    let rows: Vec<[f64; 5]> = cfg
        .queries
        .par_iter()
        .map(|q| {
            let direct = fundamental_direct(&system, q.t, &q.x, &q.y, q.u, cfg.segments, &cfg.search.optimizer)?;
            if !direct.converged {
                log::warn!("direct minimization stalled at t = {}, x = {:?}, y = {:?}", q.t, q.x, q.y);
            }
            let shot = fundamental_shooting(&hs, q.t, &q.x, &q.y, q.u, &cfg.shooting)?;
            let residual = herglotz_residual(&system, &direct.minimizer, &direct.trajectory)?;
            Ok([direct.h, direct.a, shot.a, residual, direct.iterations as f64])
        })
        .collect::<crate::Result<_>>()?;

    let mut csv = String::new();
    let mut header = vec!["t".to_string()];
    header.extend(axis_names("x", cfg.dim));
    header.extend(axis_names("y", cfg.dim));
    header.extend(["u", "h", "A_direct", "A_shooting", "herglotz_residual", "iterations"].map(String::from));
    push_row(&mut csv, header);
    for (q, r) in cfg.queries.iter().zip(&rows) {
        let mut cells = vec![num(q.t)];
        cells.extend(q.x.iter().chain(&q.y).map(|v| num(*v)));
        cells.push(num(q.u));
        cells.extend(r[..4].iter().map(|v| num(*v)));
        cells.push(format!("{}", r[4] as usize));
        push_row(&mut csv, cells);
    }
    Ok(Report {
        csv,
        sidecar: None,
        status: Ok(()),
    })
}

fn cmd_solve(cfg: &RunConfig) -> Outcome<Report> {
    cfg.validate_common(CommandKind::Solve)?;
    let (system, _) = cfg.resolve_system()?;
    let datum = cfg.require_datum()?;
    let (times, points, shape) = cfg.resolve_grid()?;
    let started = Instant::now();
    let grid = solve_value_grid(&system, &datum, &times, &points, &shape, &cfg.search)?;
    let elapsed = started.elapsed().as_secs_f64();

    let mut csv = String::new();
    let mut header = vec!["t".to_string()];
    header.extend(axis_names("x", cfg.dim));
    header.push("u_value".into());
    header.extend(axis_names("y_star", cfg.dim));
    header.push("mu_t".into());
    push_row(&mut csv, header);
    for (i, &t) in times.iter().enumerate() {
        let mu = mu_radius(&system, &datum, t);
        for (j, x) in points.iter().enumerate() {
            let mut cells = vec![num(t)];
            cells.extend(x.iter().map(|v| num(*v)));
            cells.push(num(grid.values[i][j]));
            cells.extend(grid.argmins[i][j].iter().map(|v| num(*v)));
            cells.push(num(mu));
            push_row(&mut csv, cells);
        }
    }
    let sidecar = serde_json::json!({
        "config": cfg,
        "elapsed_seconds": elapsed,
        "threads": rayon::current_num_threads(),
        "search_radius": grid.radius_used,
    });
    Ok(Report {
        csv,
        sidecar: Some(sidecar),
        status: Ok(()),
    })
}

fn resolve_family(cfg: &RunConfig) -> Outcome<(LambdaFamily, VanishingSpec)> {
    let Some(spec) = &cfg.vanishing else { return config_err("`vanishing` is required") };
    let family = builtin_family(&spec.family, cfg.dim)?;
    if spec.lambdas.is_empty() || spec.lambdas.iter().any(|l| !l.is_finite() || *l <= 0.0) {
        return config_err("vanishing.lambdas must be non-empty and positive");
    }
    if spec.lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return config_err("vanishing.lambdas must be strictly decreasing");
    }
    check_nonneg("vanishing.gap_tol", spec.gap_tol)?;
    Ok((family, spec.clone()))
}

fn cmd_vanishing(cfg: &RunConfig) -> Outcome<Report> {
    cfg.validate_common(CommandKind::Vanishing)?;
    let (family, spec) = resolve_family(cfg)?;
    let datum = cfg.require_datum()?;
    let (times, points, _) = cfg.resolve_grid()?;
    let report = run_vanishing(&family, &datum, &spec.lambdas, &times, &points, &cfg.search, spec.gap_tol)?;

    let mut csv = String::new();
    push_row(&mut csv, ["lambda", "sup_gap", "bound_check", "monotone_flag"].map(String::from));
    for (i, (&l, &g)) in report.lambdas.iter().zip(&report.gaps).enumerate() {
        let monotone = i == 0 || g <= report.gaps[i - 1] + MONOTONE_TOL;
        push_row(&mut csv, [num(l), num(g), report.bound_checks[i].to_string(), monotone.to_string()]);
    }
    if report.bound_checks.iter().any(|b| !b) {
        log::warn!("trajectory envelope failed for some lambda: {:?}", report.bound_checks);
    }
    let status = if report.final_within_tol {
        Ok(())
    } else {
        Err(Failure::Tolerance(format!(
            "final gap {:e} exceeds gap_tol {:e}",
            report.gaps.last().copied().unwrap_or(f64::NAN),
            spec.gap_tol
        )))
    };
    Ok(Report {
        csv,
        sidecar: Some(serde_json::to_value(&report).expect("report serializes")),
        status,
    })
}

fn cmd_check(cfg: &RunConfig, quiet: bool) -> Outcome<Report> {
    cfg.validate_common(CommandKind::Check)?;
    let (system, hs) = cfg.resolve_system()?;
    let datum = cfg.resolve_datum()?;
    let p = &cfg.check;
    if !(p.half_width.is_finite() && p.half_width > 0.0) || p.samples == 0 {
        return config_err("check.half_width and check.samples must be positive");
    }
    let results = run_invariants(&system, Some(&hs), datum.as_ref(), p, cfg.seed);
    let mut csv = String::new();
    push_row(&mut csv, ["invariant", "passed", "detail"].map(String::from));
    let mut text = String::new();
    for r in &results {
        push_row(&mut csv, [r.name.to_string(), r.passed.to_string(), format!("\"{}\"", r.detail.replace('"', "'"))]);
        let _ = writeln!(text, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if !quiet {
        print!("{text}");
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    let status = if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(format!("failed invariants: {}", failed.join(", "))))
    };
    Ok(Report {
        csv,
        sidecar: None,
        status,
    })
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn emit(report: &Report, out: Option<&Path>, command: CommandKind) -> io::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, &report.csv)?;
            if let Some(side) = &report.sidecar {
                let text = serde_json::to_string_pretty(side).expect("sidecar serializes");
                fs::write(sidecar_path(path), text + "\n")?;
            }
        }
        // `check` already printed its verdicts.
        None if command == CommandKind::Check => {}
        None => io::stdout().lock().write_all(report.csv.as_bytes())?,
    }
    Ok(())
}

/// Worker count: `CONTACT_HJ_THREADS` wins over the flag; 0 means auto.
pub fn resolve_threads(flag: usize) -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a nonnegative integer, got `{v}`")),
        Err(_) => Ok(flag),
    }
}

fn execute(cli: &Cli) -> Outcome<()> {
    let Some(path) = &cli.config else { return config_err("--config <path> is required") };
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = RunConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let threads = resolve_threads(cli.threads).map_err(Failure::Config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    log::info!("{:?} with {} worker threads", cli.command, pool.current_num_threads());

    let report = pool.install(|| match cli.command {
        CommandKind::Fundamental => cmd_fundamental(&cfg),
        CommandKind::Solve => cmd_solve(&cfg),
        CommandKind::Vanishing => cmd_vanishing(&cfg),
        CommandKind::Check => cmd_check(&cfg, cli.quiet),
    })?;
    let out = cli.out.as_deref().or(cfg.output.as_deref());
    emit(&report, out, cli.command).map_err(|e| Failure::Config(format!("cannot write output: {e}")))?;
    report.status
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(()) => exit::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => log::error!("configuration error: {m}"),
                Failure::Solver(e) => log::error!("solver failure: {e}"),
                Failure::Tolerance(m) => log::error!("tolerance not met: {m}"),
                Failure::Invariant(m) => log::error!("{m}"),
            }
            f.code()
        }
    }
}
