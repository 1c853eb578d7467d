//! Time series produced by the integrators, with CSV import/export.

use std::io::{self, BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::g17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Raw,
    Normalized,
    Perturbed,
    Aircraft,
}

impl SystemKind {
    pub fn state_labels(self) -> &'static [&'static str] {
        match self {
            SystemKind::Aircraft => &["x", "y", "z", "theta", "s"],
            _ => &["x", "y", "z"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: Vec<f64>,
    pub e: [f64; 2],
    pub v: f64,
    pub nke_norm: f64,
    pub chi_norm: f64,
    /// Heading error angle; aircraft runs only.
    pub beta: Option<f64>,
    /// `Nᵀ(χ + d)`; perturbed runs only.
    pub e_dot: Option<[f64; 2]>,
}

impl Sample {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.state[0], self.state[1], self.state[2])
    }

    pub fn e_norm(&self) -> f64 {
        self.e[0].hypot(self.e[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// `‖χ‖` fell below the stop threshold: the run is approaching C.
    SingularApproach { t: f64, xi: [f64; 3], chi_norm: f64 },
    DomainExit { t: f64, xi: [f64; 3], reason: String },
    /// The horizontal part of the field vanished; the aircraft heading
    /// controller is undefined.
    PlanarDegeneracy { t: f64, xi: [f64; 3] },
    /// Warning: the aircraft starts at the unstable equilibrium `β = π`.
    UnstableEquilibrium { t: f64, beta: f64 },
    Completed { t: f64 },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::SingularApproach { t, .. }
            | Event::DomainExit { t, .. }
            | Event::PlanarDegeneracy { t, .. }
            | Event::UnstableEquilibrium { t, .. }
            | Event::Completed { t } => t,
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Event::UnstableEquilibrium { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub system: SystemKind,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("no samples")]
    Empty,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl Trajectory {
    pub fn new(system: SystemKind) -> Self {
        Trajectory {
            system,
            samples: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn terminal_event(&self) -> Option<&Event> {
        self.events.iter().rev().find(|e| e.is_terminal())
    }

    pub fn completed(&self) -> bool {
        matches!(self.terminal_event(), Some(Event::Completed { .. }))
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.samples.iter().map(Sample::e_norm).collect()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(Sample::position).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.beta).collect()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.last().map(Sample::e_norm)
    }

    /// Trapezoidal running integral of `‖NKe‖²`, one value per sample.
    pub fn dissipation_integral(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.samples.len());
        for (i, s) in self.samples.iter().enumerate() {
            if i > 0 {
                let p = &self.samples[i - 1];
                acc += 0.5 * (s.t - p.t) * (s.nke_norm.powi(2) + p.nke_norm.powi(2));
            }
            out.push(acc);
        }
        out
    }

    pub fn csv_header(&self) -> Vec<&'static str> {
        let mut cols = vec!["t"];
        cols.extend_from_slice(self.system.state_labels());
        cols.extend_from_slice(&["e1", "e2", "e_norm", "V", "nke_norm"]);
        if self.system == SystemKind::Aircraft {
            cols.push("beta");
        }
        cols
    }

    /// Writes one row per sample, every float as `%.17g`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header().join(","))?;
        let mut row = Vec::new();
        for s in &self.samples {
            row.clear();
            row.push(s.t);
            row.extend_from_slice(&s.state);
            row.extend_from_slice(&[s.e[0], s.e[1], s.e_norm(), s.v, s.nke_norm]);
            if self.system == SystemKind::Aircraft {
                row.push(s.beta.unwrap_or(f64::NAN));
            }
            let line: Vec<String> = row.iter().map(|&v| g17(v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads a trajectory CSV written by [`Trajectory::write_csv`]. Flow
    /// kinds are not recorded in the file, so three-state files load as
    /// [`SystemKind::Raw`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Trajectory, CsvError> {
        let mut lines = input.lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => return Err(CsvError::Empty),
        };
        let cols: Vec<&str> = header.trim().split(',').collect();
        let system = if cols.contains(&"theta") {
            SystemKind::Aircraft
        } else {
            SystemKind::Raw
        };
        let mut traj = Trajectory::new(system);
        let expected = traj.csv_header();
        if cols != expected {
            return Err(CsvError::Malformed {
                line: 1,
                message: format!("expected header `{}`", expected.join(",")),
            });
        }
        let n_state = system.state_labels().len();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let values = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|err| CsvError::Malformed {
                    line: i + 2,
                    message: err.to_string(),
                })?;
            if values.len() != cols.len() {
                return Err(CsvError::Malformed {
                    line: i + 2,
                    message: format!("expected {} fields, found {}", cols.len(), values.len()),
                });
            }
            let rest = &values[1 + n_state..];
            traj.samples.push(Sample {
                t: values[0],
                state: values[1..1 + n_state].to_vec(),
                e: [rest[0], rest[1]],
                v: rest[3],
                nke_norm: rest[4],
                chi_norm: f64::NAN,
                beta: rest.get(5).copied(),
                e_dot: None,
            });
        }
        if traj.samples.is_empty() {
            return Err(CsvError::Empty);
        }
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, state: Vec<f64>, beta: Option<f64>) -> Sample {
        Sample {
            t,
            state,
            e: [0.1, -0.2],
            v: 0.025,
            nke_norm: 0.3,
            chi_norm: 1.0,
            beta,
            e_dot: None,
        }
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let mut traj = Trajectory::new(SystemKind::Aircraft);
        traj.samples.push(sample(0.0, vec![1.8, 1.0, 2.0, 0.1, 0.0], Some(0.5)));
        traj.samples.push(sample(0.001, vec![1.8, 1.0 / 3.0, 2.0, 0.1, 1e-7], Some(0.49)));
        let text = traj.to_csv_string();
        assert!(text.starts_with("t,x,y,z,theta,s,e1,e2,e_norm,V,nke_norm,beta\n"));
        let back = Trajectory::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.system, SystemKind::Aircraft);
        assert_eq!(back.samples[1].state, traj.samples[1].state);
        assert_eq!(back.samples[1].beta, Some(0.49));
    }

    #[test]
    fn empty_csv_is_rejected() {
        assert!(matches!(Trajectory::read_csv(&b""[..]), Err(CsvError::Empty)));
        let header_only = "t,x,y,z,e1,e2,e_norm,V,nke_norm\n";
        assert!(matches!(
            Trajectory::read_csv(header_only.as_bytes()),
            Err(CsvError::Empty)
        ));
        let bad = "t,x,y,z,e1,e2,e_norm,V,nke_norm\n0,1,2\n";
        assert!(matches!(
            Trajectory::read_csv(bad.as_bytes()),
            Err(CsvError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn dissipation_integral_is_trapezoidal() {
        let mut traj = Trajectory::new(SystemKind::Raw);
        for (t, nke) in [(0.0, 2.0), (0.5, 2.0), (1.5, 0.0)] {
            let mut s = sample(t, vec![0.0; 3], None);
            s.nke_norm = nke;
            traj.samples.push(s);
        }
        assert_eq!(traj.dissipation_integral(), vec![0.0, 2.0, 4.0]);
    }
}
