use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::dynamics::{integrate_perturbed_flow, Disturbance};
use crate::field::{sample_field, FieldParams};
use crate::ode::IntegratorConfig;
use crate::path::ImplicitPath;
use crate::trajectory::Event;

/// Shape of the disturbance applied at each amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceProfile {
    Constant,
    /// `A · exp(−rate · t)` along the same direction.
    Decaying { rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IssOptions {
    pub t_end: f64,
    pub integrator: IntegratorConfig,
    pub profile: DisturbanceProfile,
    /// Runs whose error exceeds this are reported as diverged.
    pub neighborhood: Option<f64>,
}

impl Default for IssOptions {
    fn default() -> Self {
        IssOptions {
            t_end: 40.0,
            integrator: IntegratorConfig::rk4(1e-3).sampled_every(10),
            profile: DisturbanceProfile::Constant,
            neighborhood: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssEntry {
    pub amplitude: f64,
    /// sup ‖e(t)‖ over the last fifth of the run.
    pub bound: f64,
    pub final_error: f64,
    pub max_error: f64,
    pub diverged: bool,
    /// Set when the run stopped before `t_end`.
    pub terminated: Option<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssSweep {
    pub direction: [f64; 3],
    pub profile: DisturbanceProfile,
    pub t_end: f64,
    pub entries: Vec<IssEntry>,
    /// Bounds of the non-diverged entries never decrease (1e-9 slack).
    pub monotone: bool,
}

/// Unit vector maximizing `dᵀ N K e` at `xi0`, i.e. pushing straight
/// against the correction term. On the path, where `NKe = 0`, `n₁` is used.
fn worst_direction(path: &ImplicitPath, params: &FieldParams, xi0: &Vector3<f64>) -> Result<Vector3<f64>, AnalysisError> {
    let s = sample_field(path, params, xi0)?;
    let candidates = [s.nke, s.n1(), s.n2()];
    candidates
        .iter()
        .find(|v| v.norm() > 1e-12)
        .map(|v| v.normalize())
        .ok_or_else(|| AnalysisError::InvalidInput("no usable disturbance direction at the initial point".into()))
}

/// Runs the perturbed flow once per amplitude and measures the ultimate
/// bound of the error.
pub fn iss_ultimate_bound(
    path: &ImplicitPath,
    params: &FieldParams,
    xi0: &Vector3<f64>,
    amplitudes: &[f64],
    opts: &IssOptions,
) -> Result<IssSweep, AnalysisError> {
    if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(AnalysisError::InvalidInput("amplitudes must be finite and non-negative".into()));
    }
    if amplitudes.windows(2).any(|w| w[1] < w[0]) {
        return Err(AnalysisError::InvalidInput("amplitudes must be sorted ascending".into()));
    }
    if !(opts.t_end > 0.0 && opts.t_end.is_finite()) {
        return Err(AnalysisError::InvalidInput(format!("t_end must be positive, got {}", opts.t_end)));
    }
    let dir = worst_direction(path, params, xi0)?;
    let limit = opts.neighborhood.unwrap_or(f64::INFINITY);

    let entries = amplitudes
        .par_iter()
        .map(|&amp| {
            let v: [f64; 3] = (dir * amp).into();
            let d = if amp == 0.0 {
                Disturbance::Zero
            } else {
                match opts.profile {
                    DisturbanceProfile::Constant => Disturbance::Constant { vector: v },
                    DisturbanceProfile::Decaying { rate } => Disturbance::Decaying { d0: v, rate },
                }
            };
            let traj = integrate_perturbed_flow(path, params, xi0, &d, &opts.integrator, opts.t_end)?;
            let t0 = traj.samples[0].t;
            let tail_start = t0 + 0.8 * opts.t_end;
            let errors = traj.error_norms();
            let bound = traj
                .samples
                .iter()
                .zip(&errors)
                .filter(|(s, _)| s.t >= tail_start)
                .map(|(_, e)| *e)
                .fold(f64::NAN, f64::max);
            let max_error = errors.iter().copied().fold(0.0, f64::max);
            Ok(IssEntry {
                amplitude: amp,
                bound,
                final_error: traj.final_error().unwrap_or(f64::NAN),
                max_error,
                diverged: max_error > limit || !bound.is_finite(),
                terminated: (!traj.completed()).then(|| traj.terminal_event().cloned()).flatten(),
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    let kept: Vec<f64> = entries.iter().filter(|e| !e.diverged).map(|e| e.bound).collect();
    let monotone = kept.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    Ok(IssSweep {
        direction: dir.into(),
        profile: opts.profile,
        t_end: opts.t_end,
        entries,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::builtin_helix;

    #[test]
    fn rejects_unsorted_amplitudes() {
        let r = iss_ultimate_bound(
            &builtin_helix(),
            &FieldParams::new(1.0, 1.0).unwrap(),
            &Vector3::new(1.2, 0.0, 0.0),
            &[0.1, 0.05],
            &IssOptions::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn helix_bounds_grow_with_amplitude() {
        let opts = IssOptions {
            t_end: 20.0,
            integrator: IntegratorConfig::rk4(1e-2),
            ..IssOptions::default()
        };
        let sweep = iss_ultimate_bound(
            &builtin_helix(),
            &FieldParams::new(1.0, 1.0).unwrap(),
            &Vector3::new(1.2, 0.0, 0.0),
            &[0.0, 0.01, 0.05, 0.1],
            &opts,
        )
        .unwrap();
        let b: Vec<f64> = sweep.entries.iter().map(|e| e.bound).collect();
        assert!(b[0] < 1e-6, "{b:?}");
        assert!(b[1] < b[2] && b[2] < b[3], "{b:?}");
        assert!(sweep.monotone);
    }
}
