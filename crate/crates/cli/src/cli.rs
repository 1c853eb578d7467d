//! Argument parsing and subcommand dispatch.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use gvf_core::analysis::{
    error_tube_grid, find_singular_points, fit_convergence, iss_ultimate_bound, min_q_eigenvalue,
    probe_assumptions, Aabb, DisturbanceProfile, IssOptions, LambdaBound, ProbeOptions,
};
use gvf_core::fmt::g17;
use gvf_core::ode::IntegratorConfig;
use gvf_core::trajectory::Trajectory;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::plot::{error_svg, trajectory_svg, Projection, Traj3dOptions};
use crate::run::{run, RunError};
use crate::scenario::{load_scenario, Scenario, ScenarioError};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Failure(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Scenario(s) => s.into(),
            RunError::Input(m) => CliError::Config(m),
            io @ RunError::Io { .. } => CliError::Failure(io.to_string()),
        }
    }
}

fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "gvf3d", version, about = "Guiding vector fields for 3D path following")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotArg {
    Traj3d,
    Error,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one or more scenarios and write CSV, metadata and plots.
    Simulate {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Output directory; with several scenarios each gets a
        /// subdirectory named after its file.
        #[arg(short, long)]
        out: PathBuf,
        /// Scenarios to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarize a trajectory CSV and optionally fit its decay rate.
    Analyze {
        csv: PathBuf,
        #[arg(long)]
        fit_rate: bool,
        /// Scenario the trajectory came from (needed for --fit-rate).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Use this lower bound on the eigenvalues of Q instead of sampling.
        #[arg(long)]
        lambda: Option<f64>,
        /// Grid points per axis when sampling Q.
        #[arg(long, default_value_t = 61)]
        grid: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Locate zeros of the vector field.
    FindSingular {
        scenario: PathBuf,
        /// `lo:hi` for a cube, or `x0:x1,y0:y1,z0:z1`.
        #[arg(long = "box", default_value = "-4:4", allow_hyphen_values = true)]
        bbox: String,
        #[arg(long, default_value_t = 40)]
        grid: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Sampled estimates of the standing assumptions on the path.
    ProbeAssumptions {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long = "box", default_value = "-4:4", allow_hyphen_values = true)]
        bbox: String,
        /// Grid for the singular-point search.
        #[arg(long, default_value_t = 40)]
        grid: usize,
        /// Comma-separated distance thresholds.
        #[arg(long)]
        kappas: Option<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Ultimate error bounds under constant disturbances of growing size.
    IssSweep {
        scenario: PathBuf,
        #[arg(long, default_value = "0.01,0.05,0.1")]
        amplitudes: String,
        #[arg(long, default_value_t = 40.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Use disturbances decaying at this rate instead of constant ones.
        #[arg(long)]
        decaying: Option<f64>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Render a trajectory CSV as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotArg,
        #[arg(short, long)]
        out: PathBuf,
        /// Camera `azimuth,elevation` in degrees.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "axes")]
        view: Option<String>,
        /// Plot two coordinates directly, e.g. `xy`.
        #[arg(long)]
        axes: Option<String>,
        /// Logarithmic error axis.
        #[arg(long)]
        log: bool,
        /// Overlay the desired path of this scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        title: Option<String>,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Config(format!("--box: expected `lo:hi`, got {s:?}"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

pub fn parse_box(spec: &str) -> Result<Aabb, CliError> {
    let parts: Vec<&str> = spec.split(',').collect();
    let ranges = match parts.len() {
        1 => vec![parse_range(parts[0])?; 3],
        3 => parts.iter().map(|p| parse_range(p)).collect::<Result<_, _>>()?,
        _ => return Err(CliError::Config(format!("--box: expected one or three ranges, got {spec:?}"))),
    };
    Aabb::new(
        [ranges[0].0, ranges[1].0, ranges[2].0],
        [ranges[0].1, ranges[1].1, ranges[2].1],
    )
    .map_err(|e| CliError::Config(format!("--box: {e}")))
}

fn parse_list(flag: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("{flag}: {v:?} is not a number")))
        })
        .collect()
}

fn read_trajectory(csv: &Path) -> Result<Trajectory, CliError> {
    let file = fs::File::open(csv).map_err(|e| failure(format!("cannot read {}: {e}", csv.display())))?;
    Trajectory::read_csv(BufReader::new(file)).map_err(|e| failure(format!("{}: {e}", csv.display())))
}

fn write_json<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<(), CliError> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(value).map_err(failure)?;
        fs::write(path, text + "\n").map_err(|e| failure(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn simulate(scenarios: &[PathBuf], out: &Path, jobs: usize, stdout: &mut dyn Write) -> Result<i32, CliError> {
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let loaded: Vec<Scenario> = scenarios.iter().map(|p| load_scenario(p)).collect::<Result<_, _>>()?;
    let dirs: Vec<PathBuf> = if scenarios.len() == 1 {
        vec![out.to_path_buf()]
    } else {
        let dirs: Vec<PathBuf> = scenarios
            .iter()
            .map(|p| out.join(p.file_stem().unwrap_or_default()))
            .collect();
        let mut unique = dirs.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != dirs.len() {
            return Err(CliError::Config("scenario files must have distinct names".into()));
        }
        dirs
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(failure)?;
    let results: Vec<_> = pool.install(|| {
        loaded
            .par_iter()
            .zip(&dirs)
            .map(|(s, dir)| run(s, dir))
            .collect()
    });
    let mut code = 0;
    for ((file, dir), result) in scenarios.iter().zip(&dirs).zip(results) {
        let set = result?;
        let _ = writeln!(
            stdout,
            "{} -> {}: {:?} (exit {})",
            file.display(),
            dir.display(),
            set.outcome,
            set.outcome.exit_code()
        );
        code = code.max(set.outcome.exit_code());
    }
    Ok(code)
}

#[derive(Serialize)]
struct Summary {
    samples: usize,
    t_start: f64,
    t_end: f64,
    initial_error: f64,
    max_error: f64,
    final_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_fit: Option<gvf_core::analysis::RateFit>,
}

fn analyze(
    csv: &Path,
    fit_rate: bool,
    scenario: Option<&Path>,
    lambda: Option<f64>,
    grid: usize,
    json: &Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    let traj = read_trajectory(csv)?;
    let errors = traj.error_norms();
    let mut summary = Summary {
        samples: traj.samples.len(),
        t_start: traj.samples[0].t,
        t_end: traj.last().map_or(0.0, |s| s.t),
        initial_error: errors[0],
        max_error: errors.iter().copied().fold(0.0, f64::max),
        final_error: errors[errors.len() - 1],
        rate_fit: None,
    };
    let _ = writeln!(
        stdout,
        "samples {}  t [{}, {}]  |e| initial {}  max {}  final {}",
        summary.samples,
        g17(summary.t_start),
        g17(summary.t_end),
        g17(summary.initial_error),
        g17(summary.max_error),
        g17(summary.final_error)
    );
    if fit_rate {
        let file = scenario.ok_or_else(|| CliError::Config("--fit-rate needs --scenario".into()))?;
        let scen = load_scenario(file)?;
        let params = scen.field;
        let bound = match lambda {
            Some(l) => LambdaBound::new(l).map_err(|e| CliError::Config(e.to_string()))?,
            None => {
                let path = scen.build_path()?;
                let positions = traj.positions();
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for p in &positions {
                    for i in 0..3 {
                        lo[i] = lo[i].min(p[i]);
                        hi[i] = hi[i].max(p[i]);
                    }
                }
                for i in 0..3 {
                    let pad = (0.1 * (hi[i] - lo[i])).max(0.1);
                    lo[i] -= pad;
                    hi[i] += pad;
                }
                let bbox = Aabb::new(lo, hi).map_err(failure)?;
                let delta = params.envelope_constant() * summary.initial_error;
                let mut points = error_tube_grid(&path, &bbox, grid, delta);
                points.extend(positions);
                min_q_eigenvalue(&path, &params, &points).map_err(failure)?
            }
        };
        let fit = fit_convergence(&traj, &params, &bound).map_err(failure)?;
        let _ = writeln!(
            stdout,
            "fitted rate {}  theoretical rate {}  (Lambda {} over {} samples)  envelope c {}  violations {}/{}",
            g17(fit.fitted_rate),
            g17(fit.theoretical_rate),
            g17(fit.lambda),
            bound.samples,
            g17(fit.envelope_constant),
            fit.violations,
            fit.checked
        );
        summary.rate_fit = Some(fit);
    }
    write_json(json, &summary)?;
    Ok(0)
}

fn find_singular(scenario: &Path, bbox: &str, grid: usize, json: &Option<PathBuf>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let scen = load_scenario(scenario)?;
    let bbox = parse_box(bbox)?;
    let path = scen.build_path()?;
    let found = find_singular_points(&path, &scen.field, &bbox, grid).map_err(|e| CliError::Config(e.to_string()))?;
    let _ = writeln!(stdout, "x,y,z,chi_norm,tau_norm,basin_size");
    for p in &found.points {
        let [x, y, z] = p.location;
        let _ = writeln!(
            stdout,
            "{},{},{},{},{},{}",
            g17(x),
            g17(y),
            g17(z),
            g17(p.residual),
            g17(p.tau_norm),
            p.basin.len()
        );
    }
    let _ = writeln!(
        stderr,
        "{} singular points from {} seeds ({} dropped)",
        found.points.len(),
        found.seeds,
        found.dropped
    );
    write_json(json, &found)?;
    Ok(0)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), g17)
}

#[allow(clippy::too_many_arguments)]
fn probe(
    scenario: &Path,
    samples: usize,
    bbox: &str,
    grid: usize,
    kappas: Option<&str>,
    json: &Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<i32, CliError> {
    let scen = load_scenario(scenario)?;
    let bbox = parse_box(bbox)?;
    let path = scen.build_path()?;
    let mut opts = ProbeOptions::default();
    if let Some(k) = kappas {
        opts.kappas = parse_list("--kappas", k)?;
    }
    let singular = find_singular_points(&path, &scen.field, &bbox, grid).map_err(|e| CliError::Config(e.to_string()))?;
    let report = probe_assumptions(&path, &scen.field, &singular.points, &bbox, samples, &opts)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let _ = writeln!(stdout, "{}", report.note);
    let _ = writeln!(
        stdout,
        "samples {} (skipped {}), distance to path by {:?}{}",
        report.samples,
        report.skipped,
        report.distance_method,
        if report.low_confidence { " (lower confidence)" } else { "" }
    );
    let _ = writeln!(
        stdout,
        "singular points {}, est dist(P, C) {}",
        singular.points.len(),
        if report.est_dist_p_c.is_finite() { g17(report.est_dist_p_c) } else { "inf".into() }
    );
    let _ = writeln!(stdout, "kappa,inf_e,n_e,inf_nke,n_nke");
    for e in &report.estimates {
        let _ = writeln!(
            stdout,
            "{},{},{},{},{}",
            g17(e.kappa),
            fmt_opt(e.inf_error),
            e.error_samples,
            fmt_opt(e.inf_nke),
            e.nke_samples
        );
    }
    write_json(json, &report)?;
    Ok(0)
}

fn iss_sweep(
    scenario: &Path,
    amplitudes: &str,
    t_end: f64,
    dt: f64,
    decaying: Option<f64>,
    json: &Option<PathBuf>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, CliError> {
    let scen = load_scenario(scenario)?;
    let path = scen.build_path()?;
    let amps = parse_list("--amplitudes", amplitudes)?;
    let integrator = IntegratorConfig::rk4(dt).sampled_every(10);
    integrator.validate().map_err(|m| CliError::Config(format!("--dt: {m}")))?;
    let opts = IssOptions {
        t_end,
        integrator,
        profile: match decaying {
            Some(rate) if rate > 0.0 && rate.is_finite() => DisturbanceProfile::Decaying { rate },
            Some(rate) => return Err(CliError::Config(format!("--decaying: rate must be positive, got {rate}"))),
            None => DisturbanceProfile::Constant,
        },
        neighborhood: None,
    };
    let sweep = iss_ultimate_bound(&path, &scen.field, &scen.initial_position(), &amps, &opts)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let _ = writeln!(stdout, "amplitude,bound,final_error,max_error,diverged");
    for e in &sweep.entries {
        let _ = writeln!(
            stdout,
            "{},{},{},{},{}",
            g17(e.amplitude),
            g17(e.bound),
            g17(e.final_error),
            g17(e.max_error),
            e.diverged
        );
    }
    let _ = writeln!(
        stderr,
        "bounds {} in amplitude",
        if sweep.monotone { "non-decreasing" } else { "NOT monotone" }
    );
    write_json(json, &sweep)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn plot(
    csv: &Path,
    kind: PlotArg,
    out: &Path,
    view: Option<&str>,
    axes: Option<&str>,
    log: bool,
    scenario: Option<&Path>,
    title: Option<String>,
) -> Result<i32, CliError> {
    let traj = read_trajectory(csv)?;
    let title = title.unwrap_or_else(|| csv.file_name().unwrap_or_default().to_string_lossy().into_owned());
    let svg = match kind {
        PlotArg::Traj3d => {
            let projection = match (view, axes) {
                (Some(v), _) => Projection::orbit(v),
                (None, Some(a)) => Projection::plane(a),
                (None, None) => Ok(Projection::default()),
            }
            .map_err(|e| CliError::Config(e.to_string()))?;
            let overlay = match scenario {
                Some(file) => load_scenario(file)?
                    .build_path()?
                    .parametrization()
                    .map(|p| p.sample(2000))
                    .unwrap_or_default(),
                None => Vec::new(),
            };
            trajectory_svg(&traj, &Traj3dOptions { projection, overlay, title })
        }
        PlotArg::Error => error_svg(&traj, log, &title),
    }
    .map_err(failure)?;
    fs::write(out, svg).map_err(|e| failure(format!("cannot write {}: {e}", out.display())))?;
    Ok(0)
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate { scenarios, out, jobs } => simulate(&scenarios, &out, jobs, stdout),
        Command::Analyze {
            csv,
            fit_rate,
            scenario,
            lambda,
            grid,
            json,
        } => analyze(&csv, fit_rate, scenario.as_deref(), lambda, grid, &json, stdout),
        Command::FindSingular { scenario, bbox, grid, json } => {
            find_singular(&scenario, &bbox, grid, &json, stdout, stderr)
        }
        Command::ProbeAssumptions {
            scenario,
            samples,
            bbox,
            grid,
            kappas,
            json,
        } => probe(&scenario, samples, &bbox, grid, kappas.as_deref(), &json, stdout),
        Command::IssSweep {
            scenario,
            amplitudes,
            t_end,
            dt,
            decaying,
            json,
        } => iss_sweep(&scenario, &amplitudes, t_end, dt, decaying, &json, stdout, stderr),
        Command::Plot {
            csv,
            kind,
            out,
            view,
            axes,
            log,
            scenario,
            title,
        } => plot(&csv, kind, &out, view.as_deref(), axes.as_deref(), log, scenario.as_deref(), title),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
