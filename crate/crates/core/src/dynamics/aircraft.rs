//! Fixed-wing kinematic model under the guiding-vector-field controller.
//!
//! ```text
//! ẋ = s cos θ      ẏ = s sin θ      ż = (z_u − z)/τ_z
//! θ̇ = (θ_u − θ)/τ_θ               ṡ = (s_u − s)/τ_s
//! ```

use std::f64::consts::PI;

use nalgebra::{Matrix2, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{run, DynamicsError, Observation, System};
use crate::field::{normalized_field_jacobian, FieldError, FieldParams};
use crate::ode::IntegratorConfig;
use crate::path::ImplicitPath;
use crate::trajectory::{Event, Sample, SystemKind, Trajectory};

type State = SVector<f64, 5>;

/// Rotation by π/2.
const ROT90: Matrix2<f64> = Matrix2::new(0.0, -1.0, 1.0, 0.0);

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Yaw angle (rad).
    pub theta: f64,
    /// Airspeed (m/s).
    pub s: f64,
}

impl AircraftState {
    pub fn new(x: f64, y: f64, z: f64, theta: f64, s: f64) -> Result<Self, String> {
        let all = [x, y, z, theta, s];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(format!("aircraft state must be finite, got {all:?}"));
        }
        if s < 0.0 {
            return Err(format!("airspeed must be non-negative, got {s}"));
        }
        Ok(AircraftState {
            x,
            y,
            z,
            theta: wrap_angle(theta),
            s,
        })
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn from_vector(v: &State) -> Self {
        AircraftState {
            x: v[0],
            y: v[1],
            z: v[2],
            theta: v[3],
            s: v[4],
        }
    }

    fn to_vector(self) -> State {
        State::from([self.x, self.y, self.z, self.theta, self.s])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AircraftParams {
    pub tau_z: f64,
    pub tau_theta: f64,
    pub tau_s: f64,
    pub k_theta: f64,
    /// Cruise speed.
    pub s_star: f64,
}

impl Default for AircraftParams {
    fn default() -> Self {
        AircraftParams {
            tau_z: 1.0,
            tau_theta: 1.0,
            tau_s: 1.0,
            k_theta: 1.0,
            s_star: 1.0,
        }
    }
}

impl AircraftParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("tau_z", self.tau_z),
            ("tau_theta", self.tau_theta),
            ("tau_s", self.tau_s),
            ("k_theta", self.k_theta),
            ("s_star", self.s_star),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    pub theta_u: f64,
    pub z_u: f64,
    pub s_u: f64,
    /// Turn rate of the field's planar direction along the aircraft motion.
    pub theta_d_dot: f64,
    /// Signed angle from the field's planar direction to the heading.
    pub beta: f64,
    /// `(ẋ, ẏ, ż)` from the model with the commanded altitude input.
    pub velocity: Vector3<f64>,
}

/// Heading, altitude and airspeed inputs at `state`.
pub fn aircraft_controller(
    state: &AircraftState,
    path: &ImplicitPath,
    params: &FieldParams,
    ac: &AircraftParams,
) -> Result<Controls, FieldError> {
    let pos = state.position();
    let (sample, jac_hat) = normalized_field_jacobian(path, params, &pos)?;
    let chi = sample.chi;
    let chi_hat = sample.chi_hat.expect("checked by normalized_field_jacobian");
    let planar = chi.x.hypot(chi.y);
    if planar <= 1e-9 * (1.0 + chi.norm()) {
        return Err(FieldError::PlanarDegenerate { point: pos.into() });
    }
    // χᵖ = (χ̂₁, χ̂₂) and its direction.
    let chi_p_norm = chi_hat.x.hypot(chi_hat.y);
    let dir = Vector2::new(chi.x, chi.y) / planar;

    let (sin_t, cos_t) = state.theta.sin_cos();
    let heading = Vector2::new(cos_t, sin_t);
    let z_u = state.z + ac.tau_z * state.s * chi.z / planar;
    let velocity = Vector3::new(
        state.s * cos_t,
        state.s * sin_t,
        (z_u - state.z) / ac.tau_z,
    );

    let jac_p = jac_hat.fixed_rows::<2>(0).into_owned();
    let theta_d_dot = -(dir.transpose() * ROT90 * (jac_p * velocity))[0] / chi_p_norm;
    let sin_beta = heading.dot(&(ROT90 * dir));
    let beta = sin_beta.atan2(heading.dot(&dir));
    let theta_u = ac.tau_theta * (theta_d_dot - ac.k_theta * sin_beta) + state.theta;

    Ok(Controls {
        theta_u,
        z_u,
        s_u: ac.s_star,
        theta_d_dot,
        beta,
        velocity,
    })
}

struct ClosedLoop<'a> {
    path: &'a ImplicitPath,
    params: &'a FieldParams,
    ac: &'a AircraftParams,
}

impl System<5> for ClosedLoop<'_> {
    fn kind(&self) -> SystemKind {
        SystemKind::Aircraft
    }

    fn rhs(&self, _t: f64, y: &State) -> Result<State, FieldError> {
        let st = AircraftState::from_vector(y);
        let u = aircraft_controller(&st, self.path, self.params, self.ac)?;
        Ok(State::from([
            u.velocity.x,
            u.velocity.y,
            u.velocity.z,
            (u.theta_u - st.theta) / self.ac.tau_theta,
            (u.s_u - st.s) / self.ac.tau_s,
        ]))
    }

    fn observe(&self, t: f64, y: &State) -> Result<Observation, FieldError> {
        let st = AircraftState::from_vector(y);
        let u = aircraft_controller(&st, self.path, self.params, self.ac)?;
        let s = crate::field::sample_field(self.path, self.params, &st.position())?;
        Ok(Observation {
            sample: Sample {
                t,
                state: vec![st.x, st.y, st.z, wrap_angle(st.theta), st.s],
                e: s.e.into(),
                v: s.v,
                nke_norm: s.nke_norm(),
                chi_norm: s.chi_norm(),
                beta: Some(u.beta),
                e_dot: None,
            },
            stop: None,
        })
    }

    fn initial_events(&self, y: &State) -> Vec<Event> {
        let st = AircraftState::from_vector(y);
        match aircraft_controller(&st, self.path, self.params, self.ac) {
            Ok(u) if u.beta.abs() > PI - 1e-9 => vec![Event::UnstableEquilibrium { t: 0.0, beta: u.beta }],
            _ => Vec::new(),
        }
    }

    /// Unwraps the recorded β series so it is continuous in time.
    fn finish(&self, traj: &mut Trajectory) {
        let mut prev: Option<f64> = None;
        for s in &mut traj.samples {
            if let (Some(b), Some(p)) = (s.beta, prev) {
                let unwrapped = p + wrap_angle(b - p);
                s.beta = Some(unwrapped);
            }
            prev = s.beta;
        }
    }
}

/// Simulates the closed loop from `state0`. The recorded β series is
/// unwrapped continuously; starting at `β = π` adds an
/// [`Event::UnstableEquilibrium`] warning.
pub fn integrate_aircraft(
    path: &ImplicitPath,
    params: &FieldParams,
    ac: &AircraftParams,
    state0: &AircraftState,
    integrator: &IntegratorConfig,
    t_end: f64,
) -> Result<Trajectory, DynamicsError> {
    ac.validate().map_err(DynamicsError::InvalidInput)?;
    if state0.s < 0.0 {
        return Err(DynamicsError::InvalidInput("airspeed must be non-negative".into()));
    }
    let sys = ClosedLoop { path, params, ac };
    run(&sys, state0.to_vector(), integrator, t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::builtin_cylinder_intersection;

    fn line() -> ImplicitPath {
        ImplicitPath::from_expressions("y", "z").unwrap()
    }

    #[test]
    fn aligned_aircraft_needs_no_correction() {
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let st = AircraftState::new(3.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let u = aircraft_controller(&st, &line(), &params, &AircraftParams::default()).unwrap();
        assert_eq!(u.beta, 0.0);
        assert_eq!(u.theta_d_dot, 0.0);
        assert_eq!(u.theta_u, st.theta);
        assert_eq!(u.s_u, 1.0);
        assert_eq!(u.z_u, 0.0);
    }

    #[test]
    fn cruise_speed_command_is_constant() {
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let ac = AircraftParams {
            s_star: 17.5,
            ..Default::default()
        };
        for (y, th) in [(0.3, 1.0), (-2.0, -2.0), (5.0, 3.0)] {
            let st = AircraftState::new(0.0, y, 0.4, th, 3.0).unwrap();
            assert_eq!(aircraft_controller(&st, &line(), &params, &ac).unwrap().s_u, 17.5);
        }
    }

    #[test]
    fn scenario_one_initial_controls_are_finite() {
        let path = builtin_cylinder_intersection(0.0, 1.5, 2.0, 1.0).unwrap();
        let params = FieldParams::new(2.0, 2.0).unwrap();
        let st = AircraftState::new(1.8, 1.0, 2.0, PI / 4.0, 0.0).unwrap();
        let u = aircraft_controller(&st, &path, &params, &AircraftParams::default()).unwrap();
        for v in [u.theta_u, u.z_u, u.s_u, u.theta_d_dot, u.beta] {
            assert!(v.is_finite());
        }
    }

    #[test]
    fn vertical_field_is_planar_degenerate() {
        // φ₁ = x, φ₂ = y: the path is the z axis and χ is vertical on it.
        let path = ImplicitPath::from_expressions("x", "y").unwrap();
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let st = AircraftState::new(0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let err = aircraft_controller(&st, &path, &params, &AircraftParams::default()).unwrap_err();
        assert!(matches!(err, FieldError::PlanarDegenerate { .. }));
        let traj = integrate_aircraft(
            &path,
            &params,
            &AircraftParams::default(),
            &st,
            &IntegratorConfig::default(),
            1.0,
        )
        .unwrap();
        assert!(matches!(traj.terminal_event(), Some(Event::PlanarDegeneracy { .. })));
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!(AircraftState::new(0.0, 0.0, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn zero_beta_is_an_equilibrium() {
        let params = FieldParams::new(1.0, 1.0).unwrap();
        let st = AircraftState::new(0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let traj = integrate_aircraft(
            &line(),
            &params,
            &AircraftParams::default(),
            &st,
            &IntegratorConfig::rk4(1e-3),
            10.0,
        )
        .unwrap();
        assert!(traj.betas().iter().all(|b| b.abs() < 1e-9));
    }
}
