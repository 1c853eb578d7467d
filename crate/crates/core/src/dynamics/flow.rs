use nalgebra::{Vector2, Vector3};

use super::{run, DynamicsError, Disturbance, Observation, System, NORMALIZED_STOP, RAW_STOP};
use crate::field::{sample_field, FieldError, FieldParams, FieldSample};
use crate::ode::IntegratorConfig;
use crate::path::ImplicitPath;
use crate::trajectory::{Event, Sample, SystemKind, Trajectory};

fn base_sample(t: f64, s: &FieldSample) -> Sample {
    Sample {
        t,
        state: vec![s.xi.x, s.xi.y, s.xi.z],
        e: s.e.into(),
        v: s.v,
        nke_norm: s.nke_norm(),
        chi_norm: s.chi_norm(),
        beta: None,
        e_dot: None,
    }
}

fn singular_stop(t: f64, s: &FieldSample, speed: f64, threshold: f64) -> Option<Event> {
    (speed < threshold).then(|| Event::SingularApproach {
        t,
        xi: s.xi.into(),
        chi_norm: s.chi_norm(),
    })
}

struct RawFlow<'a> {
    path: &'a ImplicitPath,
    params: &'a FieldParams,
    disturbance: Disturbance,
}

impl System<3> for RawFlow<'_> {
    fn kind(&self) -> SystemKind {
        if self.disturbance.is_zero() {
            SystemKind::Raw
        } else {
            SystemKind::Perturbed
        }
    }

    fn rhs(&self, t: f64, y: &Vector3<f64>) -> Result<Vector3<f64>, FieldError> {
        let chi = sample_field(self.path, self.params, y)?.chi;
        Ok(if self.disturbance.is_zero() {
            chi
        } else {
            chi + self.disturbance.eval(t)
        })
    }

    fn observe(&self, t: f64, y: &Vector3<f64>) -> Result<Observation, FieldError> {
        let s = sample_field(self.path, self.params, y)?;
        let mut sample = base_sample(t, &s);
        let velocity = if self.disturbance.is_zero() {
            s.chi
        } else {
            let v = s.chi + self.disturbance.eval(t);
            let e_dot: Vector2<f64> = s.n.transpose() * v;
            sample.e_dot = Some(e_dot.into());
            v
        };
        Ok(Observation {
            stop: singular_stop(t, &s, velocity.norm(), RAW_STOP),
            sample,
        })
    }
}

struct NormalizedFlow<'a> {
    path: &'a ImplicitPath,
    params: &'a FieldParams,
}

impl System<3> for NormalizedFlow<'_> {
    fn kind(&self) -> SystemKind {
        SystemKind::Normalized
    }

    fn rhs(&self, _t: f64, y: &Vector3<f64>) -> Result<Vector3<f64>, FieldError> {
        let s = sample_field(self.path, self.params, y)?;
        s.chi_hat.ok_or(FieldError::Singular {
            point: (*y).into(),
            chi_norm: s.chi_norm(),
        })
    }

    fn observe(&self, t: f64, y: &Vector3<f64>) -> Result<Observation, FieldError> {
        let s = sample_field(self.path, self.params, y)?;
        Ok(Observation {
            stop: singular_stop(t, &s, s.chi_norm(), NORMALIZED_STOP),
            sample: base_sample(t, &s),
        })
    }

    fn direction(&self, _t: f64, y: &Vector3<f64>) -> Option<Vector3<f64>> {
        sample_field(self.path, self.params, y).ok()?.chi_hat
    }
}

/// Integrates `ξ̇ = χ(ξ)`.
pub fn integrate_flow(
    path: &ImplicitPath,
    params: &FieldParams,
    xi0: &Vector3<f64>,
    integrator: &IntegratorConfig,
    t_end: f64,
) -> Result<Trajectory, DynamicsError> {
    let sys = RawFlow {
        path,
        params,
        disturbance: Disturbance::Zero,
    };
    run(&sys, *xi0, integrator, t_end)
}

/// Integrates the unit-speed flow `ξ̇ = χ(ξ)/‖χ(ξ)‖`, halting before the
/// singular set is reached.
pub fn integrate_normalized_flow(
    path: &ImplicitPath,
    params: &FieldParams,
    xi0: &Vector3<f64>,
    integrator: &IntegratorConfig,
    t_end: f64,
) -> Result<Trajectory, DynamicsError> {
    let s0 = sample_field(path, params, xi0)
        .map_err(|e| DynamicsError::InvalidInput(e.to_string()))?;
    if s0.chi_norm() <= NORMALIZED_STOP {
        return Err(DynamicsError::InvalidInput(format!(
            "initial point is on or next to the singular set (|chi| = {:e})",
            s0.chi_norm()
        )));
    }
    run(&NormalizedFlow { path, params }, *xi0, integrator, t_end)
}

/// Integrates `ξ̇ = χ(ξ) + d(t)`; samples carry `ė = Nᵀ(χ + d)`.
pub fn integrate_perturbed_flow(
    path: &ImplicitPath,
    params: &FieldParams,
    xi0: &Vector3<f64>,
    disturbance: &Disturbance,
    integrator: &IntegratorConfig,
    t_end: f64,
) -> Result<Trajectory, DynamicsError> {
    disturbance.validate().map_err(DynamicsError::InvalidInput)?;
    let sys = RawFlow {
        path,
        params,
        disturbance: *disturbance,
    };
    run(&sys, *xi0, integrator, t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{builtin_cylinder_intersection, builtin_helix};

    #[test]
    fn on_path_start_stays_on_path() {
        let helix = builtin_helix();
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let xi0 = Vector3::new(1.0, 0.0, 0.0);
        let traj = integrate_flow(&helix, &params, &xi0, &IntegratorConfig::rk4(1e-3).sampled_every(10), 10.0)
            .unwrap();
        assert!(traj.completed());
        let worst = traj.error_norms().into_iter().fold(0.0, f64::max);
        assert!(worst < 1e-6, "max |e| = {worst}");
    }

    #[test]
    fn off_path_start_converges_with_non_increasing_v() {
        let helix = builtin_helix();
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let traj = integrate_flow(
            &helix,
            &params,
            &Vector3::new(2.0, 0.0, 0.0),
            &IntegratorConfig::rk4(1e-3),
            20.0,
        )
        .unwrap();
        for w in traj.samples.windows(2) {
            assert!(w[1].v <= w[0].v + 1e-12);
        }
        assert!(traj.final_error().unwrap() < 1e-3);
        // Lyapunov decrease agrees with the dissipation integral.
        let integral = traj.dissipation_integral();
        let drop = traj.samples[0].v - traj.last().unwrap().v;
        assert!((drop - integral.last().unwrap()).abs() < 1e-6);
    }

    #[test]
    fn raw_flow_on_invariant_line_reaches_singular_point() {
        // x = y = 0 is invariant for the cylinder scenario and carries a singular point.
        let path = builtin_cylinder_intersection(0.0, 1.5, 2.0, 1.0).unwrap();
        let params = FieldParams::new(2.0, 2.0).unwrap();
        let traj = integrate_flow(
            &path,
            &params,
            &Vector3::new(0.0, 0.0, 2.3),
            &IntegratorConfig::rk4(1e-3),
            20.0,
        )
        .unwrap();
        match traj.terminal_event() {
            Some(Event::SingularApproach { chi_norm, .. }) => assert!(*chi_norm < RAW_STOP),
            other => panic!("expected singular approach, got {other:?}"),
        }
    }

    #[test]
    fn zero_disturbance_matches_raw_flow() {
        let helix = builtin_helix();
        let params = FieldParams::new(1.0, 1.5).unwrap();
        let xi0 = Vector3::new(1.4, -0.3, 0.2);
        let cfg = IntegratorConfig::rk4(1e-2);
        let raw = integrate_flow(&helix, &params, &xi0, &cfg, 5.0).unwrap();
        let pert =
            integrate_perturbed_flow(&helix, &params, &xi0, &Disturbance::Zero, &cfg, 5.0).unwrap();
        assert_eq!(raw.samples, pert.samples);
    }

    #[test]
    fn perturbed_error_derivative_matches_finite_differences() {
        let helix = builtin_helix();
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let d = Disturbance::Sinusoid {
            amplitude: [0.1, -0.05, 0.02],
            frequency: [1.0, 2.0, 0.5],
            phase: [0.0, 0.3, 1.0],
        };
        let traj = integrate_perturbed_flow(
            &helix,
            &params,
            &Vector3::new(1.5, 0.2, 0.0),
            &d,
            &IntegratorConfig::rk4(1e-3),
            2.0,
        )
        .unwrap();
        let s = &traj.samples;
        for i in (1..s.len() - 1).step_by(97) {
            let dt = s[i + 1].t - s[i - 1].t;
            let fd = [(s[i + 1].e[0] - s[i - 1].e[0]) / dt, (s[i + 1].e[1] - s[i - 1].e[1]) / dt];
            let rec = s[i].e_dot.unwrap();
            assert!((fd[0] - rec[0]).abs() < 1e-5 && (fd[1] - rec[1]).abs() < 1e-5);
        }
    }

    #[test]
    fn normalized_flow_has_unit_speed() {
        let helix = builtin_helix();
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let traj = integrate_normalized_flow(
            &helix,
            &params,
            &Vector3::new(2.0, 0.0, 0.0),
            &IntegratorConfig::rk4(1e-3),
            5.0,
        )
        .unwrap();
        let pts = traj.positions();
        let arc: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        assert!(arc <= 5.0 + 1e-9 && arc > 5.0 - 1e-4, "arc {arc}");
        for (w, ts) in pts.windows(2).zip(traj.samples.windows(2)) {
            assert!((w[1] - w[0]).norm() <= ts[1].t - ts[0].t + 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let helix = builtin_helix();
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let cfg = IntegratorConfig::default();
        assert!(integrate_flow(&helix, &params, &Vector3::new(f64::NAN, 0.0, 0.0), &cfg, 1.0).is_err());
        assert!(integrate_flow(&helix, &params, &Vector3::zeros(), &cfg, 0.0).is_err());
    }

    #[test]
    fn domain_exit_is_reported_as_event() {
        // ln(x) stops being defined once the flow carries x through zero.
        let path = ImplicitPath::from_expressions("ln(x) - y", "z").unwrap();
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let traj = integrate_flow(
            &path,
            &params,
            &Vector3::new(0.5, 0.0, 0.0),
            &IntegratorConfig::rk4(1e-2),
            50.0,
        )
        .unwrap();
        assert!(matches!(traj.terminal_event(), Some(Event::DomainExit { .. })), "{:?}", traj.events);
    }
}
