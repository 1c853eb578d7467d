//! Executes a scenario and writes its artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use gvf_core::dynamics::{
    integrate_aircraft, integrate_flow, integrate_normalized_flow, integrate_perturbed_flow,
    AircraftParams, DynamicsError,
};
use gvf_core::trajectory::{Event, SystemKind, Trajectory};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plot::{error_svg, trajectory_svg, Traj3dOptions};
use crate::scenario::{PlotKind, Scenario, ScenarioError, Start, SystemName};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Input(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How a run ended. Each outcome has a fixed process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    SingularApproach,
    PlanarDegeneracy,
    DomainExit,
    StepUnderflow,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Completed => 0,
            Outcome::SingularApproach | Outcome::PlanarDegeneracy => 2,
            Outcome::DomainExit => 3,
            Outcome::StepUnderflow => 5,
        }
    }

    fn of(traj: &Trajectory) -> Outcome {
        match traj.terminal_event() {
            Some(Event::SingularApproach { .. }) => Outcome::SingularApproach,
            Some(Event::PlanarDegeneracy { .. }) => Outcome::PlanarDegeneracy,
            Some(Event::DomainExit { .. }) => Outcome::DomainExit,
            _ => Outcome::Completed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactNames {
    pub csv: String,
    pub plots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the canonical scenario TOML.
    pub scenario_hash: String,
    /// The scenario as run, defaults filled in.
    pub scenario: Scenario,
    pub system: SystemKind,
    pub columns: Vec<String>,
    pub samples: usize,
    pub t_final: f64,
    pub initial_error: f64,
    pub final_error: f64,
    pub outcome: Outcome,
    pub exit_code: i32,
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub artifacts: ArtifactNames,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifactSet {
    pub csv: PathBuf,
    pub metadata: PathBuf,
    pub plots: Vec<PathBuf>,
    pub outcome: Outcome,
}

/// Integrates the scenario. A step-size underflow is not an error here:
/// the partial trajectory is returned with a note.
pub fn simulate(scenario: &Scenario) -> Result<(Trajectory, Option<String>), RunError> {
    let path = scenario.build_path()?;
    let params = &scenario.field;
    let cfg = &scenario.integrator;
    let t_end = scenario.t_end;
    let result = match (scenario.system.kind, scenario.start()?) {
        (SystemName::Aircraft, Start::Aircraft(s0)) => {
            let ac = scenario.system.aircraft.unwrap_or_else(AircraftParams::default);
            integrate_aircraft(&path, params, &ac, &s0, cfg, t_end)
        }
        (SystemName::Raw, Start::Point(xi0)) => integrate_flow(&path, params, &xi0, cfg, t_end),
        (SystemName::Normalized, Start::Point(xi0)) => integrate_normalized_flow(&path, params, &xi0, cfg, t_end),
        (SystemName::Perturbed, Start::Point(xi0)) => {
            let d = scenario.system.disturbance.unwrap_or_default();
            integrate_perturbed_flow(&path, params, &xi0, &d, cfg, t_end)
        }
        (kind, _) => return Err(RunError::Input(format!("initial state does not fit a {kind} run"))),
    };
    match result {
        Ok(traj) => Ok((traj, None)),
        Err(DynamicsError::StepUnderflow { t, partial, .. }) => {
            Ok((*partial, Some(format!("step size underflow at t = {t}"))))
        }
        Err(DynamicsError::InvalidInput(m)) => Err(RunError::Input(m)),
    }
}

pub fn metadata(
    scenario: &Scenario,
    traj: &Trajectory,
    note: Option<String>,
    artifacts: ArtifactNames,
) -> RunMetadata {
    let outcome = if note.is_some() {
        Outcome::StepUnderflow
    } else {
        Outcome::of(traj)
    };
    RunMetadata {
        tool: "gvf3d".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario_hash: scenario.content_hash(),
        scenario: scenario.clone(),
        system: traj.system,
        columns: traj.csv_header().into_iter().map(String::from).collect(),
        samples: traj.samples.len(),
        t_final: traj.last().map_or(0.0, |s| s.t),
        initial_error: traj.samples.first().map_or(f64::NAN, |s| s.e_norm()),
        final_error: traj.final_error().unwrap_or(f64::NAN),
        outcome,
        exit_code: outcome.exit_code(),
        events: traj.events.clone(),
        note,
        artifacts,
    }
}

/// Runs `scenario` and writes the CSV, metadata JSON and requested plots
/// into `out_dir`.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunArtifactSet, RunError> {
    let (traj, note) = simulate(scenario)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let csv = out_dir.join(&scenario.output.csv);
    let file = fs::File::create(&csv).map_err(io_err(&csv))?;
    traj.write_csv(BufWriter::new(file)).map_err(io_err(&csv))?;

    let mut plots = Vec::new();
    let title = scenario.name.clone().unwrap_or_else(|| "run".into());
    for kind in &scenario.output.plots {
        let svg = match kind {
            PlotKind::Traj3d => {
                let overlay = scenario
                    .build_path()?
                    .parametrization()
                    .map(|p| p.sample(2000))
                    .unwrap_or_default();
                let opts = Traj3dOptions {
                    overlay,
                    title: format!("{title}: trajectory"),
                    ..Traj3dOptions::default()
                };
                trajectory_svg(&traj, &opts)
            }
            PlotKind::Error => error_svg(&traj, false, &format!("{title}: path-following error")),
        }
        .map_err(|e| RunError::Input(e.to_string()))?;
        let file = out_dir.join(format!("{}.svg", kind.file_stem()));
        fs::write(&file, svg).map_err(io_err(&file))?;
        plots.push(file);
    }

    let names = ArtifactNames {
        csv: scenario.output.csv.clone(),
        plots: plots
            .iter()
            .map(|p| p.file_name().expect("file name").to_string_lossy().into_owned())
            .collect(),
    };
    let meta = metadata(scenario, &traj, note, names);
    let meta_path = out_dir.join(&scenario.output.metadata);
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&meta_path, json + "\n").map_err(io_err(&meta_path))?;

    Ok(RunArtifactSet {
        csv,
        metadata: meta_path,
        plots,
        outcome: meta.outcome,
    })
}
