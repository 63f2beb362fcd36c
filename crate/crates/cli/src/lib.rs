//! `poisint`: solve, differentiate, cross-check and serve Poisson-integral
//! CDFs from the shell.
//!
//! Exit codes: 0 success, 1 user error, 2 numerical failure.

// `!(x > 0.0)` is the NaN-rejecting form used by the input checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poisint_core::density::{central_difference_density, smooth_density, DEFAULT_DELTA1_STEPS};
use poisint_core::diagnostics::{convergence_study, ConvergenceProblem};
use poisint_core::io::{cdf_to_csv, cdf_to_json, density_to_csv, density_to_json};
use poisint_core::model::Atom;
use poisint_core::oracles::{ecdf_distance, irwin_hall_cdf, irwin_hall_grid, mc_sample, CfInverter, CfSpec, SERIES_TERMS};
use poisint_core::{CdfGrid, ConfigError, Composed, Error, Expression, Mesh, Prepared, RunConfig};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "POISINT_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "poisint", version, about = "CDFs of Poisson stochastic integrals ∫ g(s) N(ds)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the CDF on a mesh
    Solve(SolveArgs),
    /// Compute the CDF and the density of its continuous part
    Density(DensityArgs),
    /// Compare the computed CDF with an independent oracle
    Oracle(OracleArgs),
    /// Measure the L1 convergence order over a ladder of resolutions
    Converge(ConvergeArgs),
    /// Start the HTTP service
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
struct Problem {
    /// Kernel g(s)
    #[arg(long)]
    g: String,
    /// Density n(s) of the control measure
    #[arg(long, default_value = "1")]
    n: String,
    /// Time horizon
    #[arg(long = "T", default_value_t = 1.0)]
    t: f64,
    /// Spatial mesh step
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Time step
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Right end of the output mesh
    #[arg(long, default_value_t = 3.0)]
    xmax: f64,
    /// Overwrite the value at 0 with the exact no-arrival probability
    #[arg(long)]
    atom_pinning: bool,
}

impl Problem {
    fn config(&self) -> RunConfig {
        RunConfig {
            g: self.g.clone(),
            n: self.n.clone(),
            t: self.t,
            delta: self.delta,
            h: self.h,
            x_max: self.xmax,
            atom_pinning: self.atom_pinning,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct Output {
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output encoding
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Treat F(x_max) < 0.999 as a numerical failure
    #[arg(long)]
    strict_mass: bool,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: Problem,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    problem: Problem,
    #[command(flatten)]
    output: Output,
    /// Differencing half-width; defaults to 10 delta
    #[arg(long)]
    delta1: Option<f64>,
    /// Moving-average window applied to the density
    #[arg(long)]
    smooth_window: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Against {
    Series,
    Mc,
    Cf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    problem: Problem,
    #[arg(long, value_enum)]
    against: Against,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo sample count
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Points compared against the inversion (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 1.5, 2.0])]
    points: Vec<f64>,
    /// Truncation of the inversion integral
    #[arg(long, default_value_t = 100.0)]
    t_i: f64,
    /// Step of the inversion trapezoid rule
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Table every k-th node
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[command(flatten)]
    problem: Problem,
    /// Mesh steps of the ladder (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = vec![4e-3, 2e-3, 1e-3])]
    deltas: Vec<f64>,
    /// Time steps, one per mesh step; equal to the mesh steps when absent
    #[arg(long, value_delimiter = ',')]
    hs: Option<Vec<f64>>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn user(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_USER,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        let code = match e {
            ConfigError::Fields(_) => EXIT_USER,
            ConfigError::Stability { .. } => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure {
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USER },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::user(format!("i/o error: {e}"))
    }
}

/// Runs the command line `args` (program name first) with the process's
/// stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`run`] writing to the given streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    configure_workers();
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn configure_workers() {
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Solve(a) => solve(a, out, err),
        Command::Density(a) => density(a, out, err),
        Command::Oracle(a) => oracle(a, out, err),
        Command::Converge(a) => converge(a, out, err),
        Command::Serve(a) => serve(a, err),
    }
}

fn emit(path: &Option<PathBuf>, text: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn compute(problem: &Problem, err: &mut dyn Write) -> Result<(Prepared, Composed), Failure> {
    let prepared = problem.config().prepare()?;
    let started = Instant::now();
    let solved = prepared.solve()?;
    let grid = &solved.grid;
    let _ = writeln!(
        err,
        "solved on {} nodes in {:.3} s; stability margin {:.6}; F(x_max) = {:.6}",
        grid.mesh().len(),
        started.elapsed().as_secs_f64(),
        solved.report.stability_margin,
        grid.mass_captured()
    );
    for Atom { x, mass } in grid.atoms() {
        let _ = writeln!(err, "atom at {x}: mass {mass:.9}");
    }
    Ok((prepared, solved))
}

fn check_mass(solved: &Composed, strict: bool, err: &mut dyn Write) -> Result<(), Failure> {
    for w in &solved.report.warnings {
        let _ = writeln!(err, "warning: {w}");
        if strict {
            return Err(Failure {
                code: EXIT_NUMERICAL,
                message: w.to_string(),
            });
        }
    }
    Ok(())
}

fn solve(a: SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let (prepared, solved) = compute(&a.problem, err)?;
    check_mass(&solved, a.output.strict_mass, err)?;
    let text = match a.output.format {
        Format::Csv => cdf_to_csv(&solved.grid),
        Format::Json => cdf_to_json(&solved.grid, Some(prepared.meta)),
    };
    emit(&a.output.out, &text, out)
}

fn density(a: DensityArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let (prepared, solved) = compute(&a.problem, err)?;
    check_mass(&solved, a.output.strict_mass, err)?;
    let delta1 = a.delta1.unwrap_or(DEFAULT_DELTA1_STEPS * a.problem.delta);
    let mut d = central_difference_density(&solved.grid, delta1).map_err(|e| Failure::user(e.to_string()))?;
    if let Some(w) = a.smooth_window {
        d = smooth_density(&d, w).map_err(|e| Failure::user(e.to_string()))?;
    }
    if d.clamped > 0.0 {
        let _ = writeln!(err, "clamped {:.3e} of negative density mass", d.clamped);
    }
    let text = match a.output.format {
        Format::Csv => density_to_csv(&d),
        Format::Json => density_to_json(&d, Some(prepared.meta)),
    };
    emit(&a.output.out, &text, out)
}

fn is_identity_problem(p: &Prepared, t: f64) -> bool {
    p.g == Expression::Var && p.n.expression() == &Expression::Num(1.0) && t == 1.0
}

fn table_row(x: f64, fd: f64, exact: f64) -> String {
    let abs = (fd - exact).abs();
    let rel = if exact != 0.0 { abs / exact.abs() } else { 0.0 };
    format!("{x:.16e},{fd:.16e},{exact:.16e},{abs:.6e},{rel:.6e}\n")
}

const TABLE_HEADER: &str = "x,F_fd,F_oracle,abs_err,rel_err\n";

fn oracle(a: OracleArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let prepared = a.problem.config().prepare()?;
    if a.against == Against::Series && !is_identity_problem(&prepared, a.problem.t) {
        return Err(Failure::user(
            "the series oracle covers only g = s, n = 1, T = 1",
        ));
    }
    let (_, solved) = compute(&a.problem, err)?;
    let grid = &solved.grid;
    let stride = a.stride.max(1);
    let mut text = String::from(TABLE_HEADER);
    match a.against {
        Against::Series => {
            let mut worst = 0.0f64;
            for (j, x) in grid.mesh().nodes().enumerate() {
                let exact = irwin_hall_cdf(x, SERIES_TERMS);
                let fd = grid.values()[j];
                if x < grid.mesh().x_max() {
                    worst = worst.max((fd - exact).abs() / exact);
                }
                if j % stride == 0 {
                    text.push_str(&table_row(x, fd, exact));
                }
            }
            text.push_str(&format!("# max_rel_err,{worst:.6e}\n"));
        }
        Against::Mc => {
            let samples = mc_sample(&prepared.g, &prepared.n, a.samples, a.seed)?;
            let m = samples.len() as f64;
            for (j, x) in grid.mesh().nodes().enumerate() {
                if j % stride == 0 {
                    let ecdf = samples.partition_point(|&s| s <= x) as f64 / m;
                    text.push_str(&table_row(x, grid.values()[j], ecdf));
                }
            }
            let dist = ecdf_distance(&samples, grid)?;
            let dkw = ((2.0f64 / 0.01).ln() / (2.0 * m)).sqrt();
            text.push_str(&format!("# sup_distance,{dist:.6e}\n# dkw_99,{dkw:.6e}\n"));
        }
        Against::Cf => {
            if grid.mesh().x_min() < 0.0 {
                return Err(Failure::user("the inversion oracle needs a non-negative kernel"));
            }
            let spec = CfSpec::new(prepared.g.clone(), prepared.n.clone(), a.t_i, a.eta)
                .map_err(|e| Failure::user(e.to_string()))?;
            let started = Instant::now();
            let inv = CfInverter::new(&spec)?;
            for &x in &a.points {
                if !(x > 0.0) {
                    return Err(Failure::user(format!("inversion points must be positive, got {x}")));
                }
                text.push_str(&table_row(x, grid.value_at(x), inv.cdf(x)));
            }
            text.push_str(&format!(
                "# inversion_seconds,{:.3}\n# fd_seconds,{:.3}\n",
                started.elapsed().as_secs_f64(),
                solved.report.elapsed.as_secs_f64()
            ));
        }
    }
    emit(&a.out, &text, out)
}

fn converge(a: ConvergeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let hs = a.hs.clone().unwrap_or_else(|| a.deltas.clone());
    if hs.len() != a.deltas.len() || a.deltas.is_empty() {
        return Err(Failure::user("--hs needs one entry per --deltas entry"));
    }
    let finest = a.deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let finest_h = hs.iter().cloned().fold(f64::INFINITY, f64::min);
    // validates expressions and the stability gate at the smallest time step
    let prepared = RunConfig {
        delta: finest,
        h: finest_h,
        ..a.problem.config()
    }
    .prepare()?;
    for (&d, &h) in a.deltas.iter().zip(&hs) {
        RunConfig {
            delta: d,
            h,
            ..a.problem.config()
        }
        .prepare()?;
    }
    let problem = ConvergenceProblem {
        g: prepared.g.clone(),
        n: prepared.n.clone(),
        x_max: a.problem.xmax,
    };
    let resolutions: Vec<(f64, f64)> = a.deltas.iter().cloned().zip(hs).collect();
    let table = if is_identity_problem(&prepared, a.problem.t) {
        let _ = writeln!(err, "reference: exact series");
        convergence_study(&problem, &resolutions, |m: &Mesh| irwin_hall_grid(m, SERIES_TERMS))?
    } else {
        let _ = writeln!(err, "reference: solve at delta = h = {}", finest / 4.0);
        let fine = RunConfig {
            delta: finest / 4.0,
            h: finest_h / 4.0,
            ..a.problem.config()
        }
        .prepare()?
        .solve()?;
        convergence_study(&problem, &resolutions, |m: &Mesh| sample_onto(&fine.grid, m))?
    };
    let mut text = table.to_csv();
    match table.order {
        Some(p) => text.push_str(&format!("# fitted_order,{p:.6}\n")),
        None => text.push_str("# fitted_order,undefined\n"),
    }
    emit(&a.out, &text, out)?;
    let _ = writeln!(
        err,
        "fitted order: {}",
        table.order.map(|p| format!("{p:.4}")).unwrap_or_else(|| "undefined".into())
    );
    Ok(())
}

/// Reads a reference grid at the nodes of a coarser mesh on the same lattice.
fn sample_onto(reference: &CdfGrid, mesh: &Mesh) -> poisint_core::Result<CdfGrid> {
    let values = mesh.nodes().map(|x| reference.value_at(x)).collect();
    let atoms = reference
        .atoms()
        .iter()
        .filter(|a| a.x >= mesh.x_min() && a.x <= mesh.x_max())
        .map(|a| Atom {
            x: mesh.x(mesh.nearest_index(a.x).expect("inside the mesh")),
            mass: a.mass,
        })
        .collect();
    CdfGrid::new(*mesh, values, atoms)
}

fn serve(a: ServeArgs, err: &mut dyn Write) -> Result<(), Failure> {
    let addr: std::net::SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Failure::user(format!("bad address {}:{}: {e}", a.host, a.port)))?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let _ = writeln!(err, "listening on http://{addr}");
    runtime.block_on(poisint_service::serve(addr))?;
    Ok(())
}
