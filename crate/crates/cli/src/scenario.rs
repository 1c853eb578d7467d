//! Scenario files: a TOML description of one simulation run.
//!
//! ```toml
//! t_end = 60.0
//!
//! [path.builtin]
//! name = "helix"
//!
//! [field]
//! k1 = 1.0
//! k2 = 1.0
//!
//! [system]
//! kind = "aircraft"
//!
//! [initial]
//! state = [0.1, 0.0, -5.0, 3.141592653589793, 0.0]
//! ```

use std::fmt;
use std::path::Path;

use gvf_core::dynamics::{AircraftParams, AircraftState, Disturbance};
use gvf_core::expr::ParseError;
use gvf_core::field::FieldParams;
use gvf_core::ode::IntegratorConfig;
use gvf_core::path::{builtin_cylinder_intersection, builtin_helix, ImplicitPath, PathError};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("path.{which}: {source}")]
    Expression {
        which: &'static str,
        source: ParseError,
    },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinPath {
    /// `(x−a)² + (z−b)² = r²` intersected with `y² + z² = R²`.
    CylinderIntersection { a: f64, b: f64, big_r: f64, r: f64 },
    /// `x = cos z, y = sin z`
    Helix,
}

/// Either a built-in path or two surface expressions in x, y, z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPathSpec", into = "RawPathSpec")]
pub enum PathSpec {
    Builtin(BuiltinPath),
    Expressions { phi1: String, phi2: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPathSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    builtin: Option<BuiltinPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi2: Option<String>,
}

impl TryFrom<RawPathSpec> for PathSpec {
    type Error = String;
    fn try_from(raw: RawPathSpec) -> Result<Self, String> {
        match raw {
            RawPathSpec {
                builtin: Some(b),
                phi1: None,
                phi2: None,
            } => Ok(PathSpec::Builtin(b)),
            RawPathSpec {
                builtin: None,
                phi1: Some(phi1),
                phi2: Some(phi2),
            } => Ok(PathSpec::Expressions { phi1, phi2 }),
            RawPathSpec { builtin: Some(_), .. } => {
                Err("give either `builtin` or the expressions `phi1`/`phi2`, not both".into())
            }
            _ => Err("needs `builtin` or both `phi1` and `phi2`".into()),
        }
    }
}

impl From<PathSpec> for RawPathSpec {
    fn from(p: PathSpec) -> Self {
        match p {
            PathSpec::Builtin(b) => RawPathSpec {
                builtin: Some(b),
                phi1: None,
                phi2: None,
            },
            PathSpec::Expressions { phi1, phi2 } => RawPathSpec {
                builtin: None,
                phi1: Some(phi1),
                phi2: Some(phi2),
            },
        }
    }
}

impl PathSpec {
    pub fn build(&self) -> Result<ImplicitPath, ScenarioError> {
        match self {
            PathSpec::Builtin(BuiltinPath::Helix) => Ok(builtin_helix()),
            PathSpec::Builtin(BuiltinPath::CylinderIntersection { a, b, big_r, r }) => {
                builtin_cylinder_intersection(*a, *b, *big_r, *r)
                    .map_err(|e| invalid("path.builtin", e.to_string()))
            }
            PathSpec::Expressions { phi1, phi2 } => {
                ImplicitPath::from_expressions(phi1, phi2).map_err(|e| match e {
                    PathError::Parse { which, source } => ScenarioError::Expression { which, source },
                    other => invalid("path", other.to_string()),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    Raw,
    Normalized,
    Perturbed,
    Aircraft,
}

impl fmt::Display for SystemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SystemName::Raw => "raw",
            SystemName::Normalized => "normalized",
            SystemName::Perturbed => "perturbed",
            SystemName::Aircraft => "aircraft",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub kind: SystemName,
    /// Perturbed runs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<Disturbance>,
    /// Aircraft runs only; defaults to unit time constants and gains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aircraft: Option<AircraftParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    /// `[x, y, z]` for flows, `[x, y, z, theta, s]` for the aircraft.
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Traj3d,
    Error,
}

impl PlotKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            PlotKind::Traj3d => "trajectory",
            PlotKind::Error => "error",
        }
    }
}

fn default_csv() -> String {
    "trajectory.csv".into()
}

fn default_metadata() -> String {
    "metadata.json".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_metadata")]
    pub metadata: String,
    #[serde(default)]
    pub plots: Vec<PlotKind>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            csv: default_csv(),
            metadata: default_metadata(),
            plots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub t_end: f64,
    pub path: PathSpec,
    pub field: FieldParams,
    pub system: SystemSpec,
    pub initial: InitialState,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Initial condition in the shape the chosen system needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    Point(Vector3<f64>),
    Aircraft(AircraftState),
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let mut scenario: Scenario = toml::from_str(text)?;
        scenario.fill_defaults();
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// SHA-256 of the canonical TOML form, defaults included.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    fn fill_defaults(&mut self) {
        if self.system.kind == SystemName::Aircraft && self.system.aircraft.is_none() {
            self.system.aircraft = Some(AircraftParams::default());
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be positive and finite, got {}", self.t_end)));
        }
        self.integrator.validate().map_err(|m| invalid("integrator", m))?;
        let sys = &self.system;
        match (sys.kind, &sys.disturbance, &sys.aircraft) {
            (SystemName::Perturbed, None, _) => {
                return Err(invalid("system.disturbance", "required for perturbed runs"))
            }
            (SystemName::Perturbed, Some(d), _) => {
                d.validate().map_err(|m| invalid("system.disturbance", m))?
            }
            (kind, Some(_), _) => {
                return Err(invalid("system.disturbance", format!("not used by {kind} runs")))
            }
            _ => {}
        }
        match (sys.kind, &sys.aircraft) {
            (SystemName::Aircraft, Some(ac)) => ac.validate().map_err(|m| invalid("system.aircraft", m))?,
            (kind, Some(_)) if kind != SystemName::Aircraft => {
                return Err(invalid("system.aircraft", format!("not used by {kind} runs")))
            }
            _ => {}
        }
        let want = if sys.kind == SystemName::Aircraft { 5 } else { 3 };
        let got = self.initial.state.len();
        if got != want {
            return Err(invalid(
                "initial.state",
                format!("{} runs need {want} components, got {got}", sys.kind),
            ));
        }
        self.start()?;
        self.path.build()?;
        Ok(())
    }

    pub fn build_path(&self) -> Result<ImplicitPath, ScenarioError> {
        self.path.build()
    }

    pub fn start(&self) -> Result<Start, ScenarioError> {
        let s = &self.initial.state;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial.state", "components must be finite"));
        }
        if self.system.kind == SystemName::Aircraft {
            AircraftState::new(s[0], s[1], s[2], s[3], s[4])
                .map(Start::Aircraft)
                .map_err(|m| invalid("initial.state", m))
        } else {
            Ok(Start::Point(Vector3::new(s[0], s[1], s[2])))
        }
    }

    /// Position part of the initial state.
    pub fn initial_position(&self) -> Vector3<f64> {
        let s = &self.initial.state;
        Vector3::new(s[0], s[1], s[2])
    }
}

pub fn load_scenario(file: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(file).map_err(|source| ScenarioError::Io {
        path: file.display().to_string(),
        source,
    })?;
    Scenario::from_toml(&text)
}
