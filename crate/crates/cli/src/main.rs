//! `bridge-stop`: solve for the optimal stopping boundary of `e^{X}` under a
//! Brownian bridge and produce the boundary, value surface, sample paths,
//! curve fits and solver comparisons as CSV/JSON files.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure
//! (non-convergence, bracketing, fit), 4 I/O failure.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bridge_stop::montecarlo::DEFAULT_PATHS;
use bridge_stop::value::DEFAULT_FD_STEP;
use bridge_stop::{
    backward_solve, compare_boundaries, estimate_rule_value, fit_ansatz, linspace, monotonicity_slack,
    picard_solve, simulate_path, spatial_derivative, value_at, value_surface, Boundary, BridgeSpec, Error,
    McConfig, McReport, PathSeed, SolveReport, StoppingRule, TimeGrid,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "bridge-stop", version, about = "Optimal stopping of exp(X) for a Brownian bridge")]
struct Cli {
    #[command(flatten)]
    run: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunConfig {
    /// Pin time T.
    #[arg(long = "T", global = true, default_value_t = 1.0)]
    pin_time: f64,
    /// Pin point α.
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha: f64,
    /// Equispaced time step h of the boundary grid.
    #[arg(long, global = true, default_value_t = 1e-3, allow_negative_numbers = true)]
    mesh: f64,
    /// Picard stopping tolerance ε on the sup-norm change.
    #[arg(long, global = true, default_value_t = 1e-6, allow_negative_numbers = true)]
    tol: f64,
    /// Picard iteration cap.
    #[arg(long, global = true, default_value_t = 1_000)]
    max_iter: usize,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the boundary; writes boundary.csv and solve_report.json.
    Solve {
        #[arg(long, value_enum, default_value_t = Method::Picard)]
        method: Method,
    },
    /// Evaluate the value function on a (t, x) grid; writes value_surface.csv.
    Value {
        #[command(flatten)]
        source: BoundarySource,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long, default_value_t = 1e-2)]
        dx: f64,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        x_min: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        x_max: f64,
        #[arg(long, value_enum, default_value_t = SurfaceFormat::Long)]
        format: SurfaceFormat,
    },
    /// Sample one path and estimate the boundary rule's payoff by Monte Carlo;
    /// writes path.csv and simulate_report.json.
    Simulate {
        #[command(flatten)]
        source: BoundarySource,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
        x0: f64,
        #[arg(long, default_value_t = 2019)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_PATHS)]
        paths: usize,
    },
    /// Fit b(t) ≈ α + A(1 - exp(B√(T - t))); writes fit.json.
    Fit {
        #[command(flatten)]
        source: BoundarySource,
    },
    /// Run both solvers on the same grid; writes compare.json.
    Compare,
}

#[derive(Args, Debug, Clone)]
struct BoundarySource {
    /// Boundary CSV from `solve`; solved inline when omitted.
    #[arg(long)]
    boundary: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Picard,
    Backward,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SurfaceFormat {
    Long,
    Grid,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "I/O failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::InvalidGrid(_) | Error::GridMismatch(_) => CliError::Config(e.to_string()),
            Error::NonConvergence { ref errors, .. } => {
                let tail: Vec<String> = errors.iter().rev().take(5).rev().map(|e| format!("{e:.3e}")).collect();
                CliError::Numerical(format!("{e}; last errors [{}]", tail.join(", ")))
            }
            Error::Quadrature { .. } | Error::Bracket { .. } | Error::Fit(_) => CliError::Numerical(e.to_string()),
            Error::Io(_) | Error::Json(_) => CliError::Io(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &FsPath) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

impl RunConfig {
    fn spec(&self) -> CliResult<BridgeSpec> {
        Ok(BridgeSpec::new(self.pin_time, self.alpha)?)
    }

    fn grid(&self, spec: &BridgeSpec) -> CliResult<TimeGrid> {
        Ok(TimeGrid::with_mesh(spec, 0.0, self.mesh)?)
    }

    fn check(&self) -> CliResult<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Config(format!("--tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(CliError::Config("--max-iter must be at least 1".into()));
        }
        Ok(())
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let path = self.out.join(name);
        File::create(&path).map(BufWriter::new).map_err(io_err(&path))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(io_err(&self.out.join(name)))
    }

    fn load_boundary(&self, spec: &BridgeSpec, source: &BoundarySource) -> CliResult<Boundary> {
        match &source.boundary {
            Some(path) => {
                let file = File::open(path).map_err(io_err(path))?;
                Ok(Boundary::read_csv(*spec, BufReader::new(file))?)
            }
            None => Ok(picard_solve(spec, &self.grid(spec)?, self.tol, self.max_iter)?.0),
        }
    }
}

fn cmd_solve(run: &RunConfig, method: Method) -> CliResult<()> {
    let spec = run.spec()?;
    let grid = run.grid(&spec)?;
    let (boundary, report) = match method {
        Method::Picard => {
            let (b, r) = picard_solve(&spec, &grid, run.tol, run.max_iter)?;
            let mut report = r.to_json();
            report["method"] = json!("picard");
            (b, report)
        }
        Method::Backward => {
            let clock = Instant::now();
            let b = backward_solve(&spec, &grid)?;
            let wall = clock.elapsed();
            let report = json!({
                "method": "backward",
                "mesh": grid.mesh(),
                "wall_time_ms": wall.as_secs_f64() * 1e3,
            });
            (b, report)
        }
    };
    let mut csv = run.create("boundary.csv")?;
    boundary.write_csv(&mut csv)?;
    csv.flush().map_err(io_err(&run.out))?;

    let d = boundary.diagnostics();
    let mut report = report;
    report["T"] = json!(spec.pin_time());
    report["alpha"] = json!(spec.pin_point());
    report["b0"] = json!(boundary.value(0));
    report["diagnostics"] = json!({
        "terminal_offset": d.terminal_offset,
        "max_increase": d.max_increase,
        "min_gap_above_q": d.min_gap_above_q,
        "max_value": d.max_value,
        "all_finite": d.all_finite,
    });
    run.write_json("solve_report.json", &report)?;
    eprintln!(
        "b(0) = {:.6}, {} nodes, written to {}",
        boundary.value(0),
        grid.len(),
        run.out.display()
    );
    Ok(())
}

fn cmd_value(run: &RunConfig, source: &BoundarySource, dt: f64, dx: f64, x_min: f64, x_max: f64, format: SurfaceFormat) -> CliResult<()> {
    let spec = run.spec()?;
    if !(dt > 0.0 && dx > 0.0 && x_max > x_min) {
        return Err(CliError::Config(format!(
            "need dt > 0, dx > 0 and x_max > x_min (got dt={dt}, dx={dx}, x in [{x_min}, {x_max}])"
        )));
    }
    let boundary = run.load_boundary(&spec, source)?;
    let t0 = boundary.grid().start();
    let n_t = ((spec.pin_time() - t0) / dt).round().max(1.0) as usize;
    let n_x = ((x_max - x_min) / dx).round().max(1.0) as usize;
    let surface = value_surface(&spec, &boundary, &linspace(t0, spec.pin_time(), n_t), &linspace(x_min, x_max, n_x))?;
    let mut csv = run.create("value_surface.csv")?;
    match format {
        SurfaceFormat::Long => surface.write_long_csv(&mut csv)?,
        SurfaceFormat::Grid => surface.write_grid_csv(&mut csv)?,
    }
    csv.flush().map_err(io_err(&run.out))?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport {
    path_seed: u64,
    hitting_time: Option<f64>,
    hitting_value: f64,
    value: f64,
    smooth_fit_slope: Option<f64>,
    monte_carlo: McReport,
}

fn cmd_simulate(run: &RunConfig, source: &BoundarySource, t0: f64, x0: f64, seed: u64, paths: usize) -> CliResult<()> {
    let spec = run.spec()?;
    let boundary = run.load_boundary(&spec, source)?;
    if !(t0 >= boundary.grid().start() && t0 < spec.pin_time()) {
        return Err(CliError::Config(format!("--t0 {t0} must lie in [{}, {})", boundary.grid().start(), spec.pin_time())));
    }
    if paths == 0 {
        return Err(CliError::Config("--paths must be at least 1".into()));
    }
    // the illustrative path runs on the boundary grid from the first node at or after t0
    let first = boundary.grid().nodes().position(|t| t >= t0).unwrap_or(0);
    let grid = TimeGrid::new(t0, spec.pin_time(), boundary.grid().n_steps() - first)?;
    let path = simulate_path(&spec, t0, x0, &grid, PathSeed::new(seed, u64::MAX))?;
    let hit = path
        .times()
        .zip(&path.values)
        .find(|(t, x)| **x >= boundary.interpolate(*t).unwrap_or(f64::INFINITY));
    let mut csv = run.create("path.csv")?;
    path.write_csv(&mut csv)?;
    csv.flush().map_err(io_err(&run.out))?;

    let config = McConfig::new(paths, seed);
    let est = estimate_rule_value(&spec, &boundary, t0, x0, &config)?;
    let bt = boundary.interpolate(t0)?;
    let report = SimulateReport {
        path_seed: seed,
        hitting_time: hit.map(|(t, _)| t),
        hitting_value: hit.map_or(*path.values.last().unwrap(), |(_, x)| *x),
        value: value_at(&spec, &boundary, t0, x0)?,
        smooth_fit_slope: spatial_derivative(&spec, &boundary, t0, bt - DEFAULT_FD_STEP, DEFAULT_FD_STEP).ok(),
        monte_carlo: McReport::new(&StoppingRule::Boundary(&boundary), t0, x0, &est),
    };
    run.write_json("simulate_report.json", &report)
}

fn cmd_fit(run: &RunConfig, source: &BoundarySource) -> CliResult<()> {
    let spec = run.spec()?;
    let boundary = run.load_boundary(&spec, source)?;
    let fit = fit_ansatz(&boundary)?;
    run.write_json("fit.json", &fit)
}

fn cmd_compare(run: &RunConfig) -> CliResult<()> {
    let spec = run.spec()?;
    let grid = run.grid(&spec)?;
    let (picard, report): (Boundary, SolveReport) = picard_solve(&spec, &grid, run.tol, run.max_iter)?;
    let clock = Instant::now();
    let backward = backward_solve(&spec, &grid)?;
    let backward_time = clock.elapsed();
    let slack = monotonicity_slack(grid.mesh());
    let report = json!({
        "T": spec.pin_time(),
        "alpha": spec.pin_point(),
        "mesh": grid.mesh(),
        "tolerance": run.tol,
        "sup_diff": compare_boundaries(&picard, &backward)?,
        "picard_iterations": report.iterations,
        "picard_wall_time_ms": report.wall_time.as_secs_f64() * 1e3,
        "backward_wall_time_ms": backward_time.as_secs_f64() * 1e3,
        "picard_valid": picard.diagnostics().holds(slack, 1e-6, 5.0 + spec.pin_point().max(0.0) + spec.pin_time()),
        "backward_valid": backward.diagnostics().holds(slack, 1e-6, 5.0 + spec.pin_point().max(0.0) + spec.pin_time()),
    });
    run.write_json("compare.json", &report)
}

fn run(cli: Cli) -> CliResult<()> {
    cli.run.check()?;
    match &cli.command {
        Command::Solve { method } => cmd_solve(&cli.run, *method),
        Command::Value { source, dt, dx, x_min, x_max, format } => {
            cmd_value(&cli.run, source, *dt, *dx, *x_min, *x_max, *format)
        }
        Command::Simulate { source, t0, x0, seed, paths } => cmd_simulate(&cli.run, source, *t0, *x0, *seed, *paths),
        Command::Fit { source } => cmd_fit(&cli.run, source),
        Command::Compare => cmd_compare(&cli.run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bridge-stop: {e}");
            ExitCode::from(e.code())
        }
    }
}
