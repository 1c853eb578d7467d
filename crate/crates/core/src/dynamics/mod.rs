//! Integration of the raw, normalized and perturbed flows and of the
//! fixed-wing closed loop, with event detection.

mod aircraft;
mod disturbance;
mod flow;

pub use aircraft::{
    aircraft_controller, integrate_aircraft, AircraftParams, AircraftState, Controls,
};
pub use disturbance::Disturbance;
pub use flow::{integrate_flow, integrate_normalized_flow, integrate_perturbed_flow};

use nalgebra::{SVector, Vector3};
use thiserror::Error;

use crate::field::FieldError;
use crate::ode::{dopri5_factor, dopri5_step, rk4_step, IntegratorConfig, Method};
use crate::path::PathError;
use crate::trajectory::{Event, Sample, SystemKind, Trajectory};

/// `‖χ‖` below which the raw and perturbed flows stop with a
/// singular-approach event.
pub const RAW_STOP: f64 = 1e-10;
/// `‖χ‖` below which the normalized flow stops, before `χ/‖χ‖` blows up.
pub const NORMALIZED_STOP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("step size underflow at t = {t} (last valid state {state:?})")]
    StepUnderflow {
        t: f64,
        state: Vec<f64>,
        partial: Box<Trajectory>,
    },
}

/// What a system reports about an accepted state.
pub(crate) struct Observation {
    pub sample: Sample,
    pub stop: Option<Event>,
}

pub(crate) trait System<const D: usize> {
    fn kind(&self) -> SystemKind;

    fn rhs(&self, t: f64, y: &SVector<f64, D>) -> Result<SVector<f64, D>, FieldError>;

    fn observe(&self, t: f64, y: &SVector<f64, D>) -> Result<Observation, FieldError>;

    /// Unit direction of motion, for systems whose right-hand side flips
    /// discontinuously when a step crosses the singular set.
    fn direction(&self, _t: f64, _y: &SVector<f64, D>) -> Option<Vector3<f64>> {
        None
    }

    /// Events to attach before the first step.
    fn initial_events(&self, _y: &SVector<f64, D>) -> Vec<Event> {
        Vec::new()
    }

    fn finish(&self, _traj: &mut Trajectory) {}
}

pub(crate) fn event_from_error(t: f64, xi: [f64; 3], err: FieldError) -> Event {
    match err {
        FieldError::Singular { chi_norm, .. } => Event::SingularApproach { t, xi, chi_norm },
        FieldError::PlanarDegenerate { .. } => Event::PlanarDegeneracy { t, xi },
        FieldError::Path(PathError::Domain { .. }) => Event::DomainExit {
            t,
            xi,
            reason: "surface functions not evaluable".into(),
        },
        other => Event::DomainExit {
            t,
            xi,
            reason: other.to_string(),
        },
    }
}

fn position<const D: usize>(y: &SVector<f64, D>) -> [f64; 3] {
    [y[0], y[1], y[2]]
}

struct Driver<'a, const D: usize, S: System<D>> {
    sys: &'a S,
    cfg: &'a IntegratorConfig,
    traj: Trajectory,
    accepted: usize,
    last_recorded: usize,
}

enum Flow {
    Continue,
    Stop,
}

impl<'a, const D: usize, S: System<D>> Driver<'a, D, S> {
    fn step(&self, t: f64, y: &SVector<f64, D>, h: f64) -> Result<(SVector<f64, D>, f64), FieldError> {
        let mut f = |t: f64, y: &SVector<f64, D>| self.sys.rhs(t, y);
        match self.cfg.method {
            Method::Rk4 => rk4_step(&mut f, t, y, h).map(|y| (y, 0.0)),
            Method::Rk45 => dopri5_step(&mut f, t, y, h, self.cfg.atol, self.cfg.rtol),
        }
    }

    fn stop_with(&mut self, event: Event) -> Flow {
        self.traj.events.push(event);
        Flow::Stop
    }

    /// Records an accepted state and checks it for terminal events.
    fn accept(&mut self, t: f64, y: &SVector<f64, D>, force_record: bool) -> Flow {
        if y.iter().any(|v| !v.is_finite()) {
            return self.stop_with(Event::DomainExit {
                t,
                xi: position(y),
                reason: "state is no longer finite".into(),
            });
        }
        self.accepted += 1;
        match self.sys.observe(t, y) {
            Ok(obs) => {
                let stride = self.accepted.is_multiple_of(self.cfg.sample_every);
                if stride || force_record || obs.stop.is_some() {
                    self.traj.samples.push(obs.sample);
                    self.last_recorded = self.accepted;
                }
                match obs.stop {
                    Some(event) => self.stop_with(event),
                    None => Flow::Continue,
                }
            }
            Err(err) => self.stop_with(event_from_error(t, position(y), err)),
        }
    }

    /// Makes sure the last accepted state is in the record.
    fn record_last(&mut self, t: f64, y: &SVector<f64, D>) {
        if self.last_recorded != self.accepted {
            if let Ok(obs) = self.sys.observe(t, y) {
                self.traj.samples.push(obs.sample);
                self.last_recorded = self.accepted;
            }
        }
    }

    /// Locates the singular-set crossing inside a step whose direction of
    /// motion reversed. Returns the state reached if the crossing resolves
    /// to a stop event.
    fn locate_crossing(
        &mut self,
        t: f64,
        y: &SVector<f64, D>,
        h: f64,
        d0: &Vector3<f64>,
    ) -> Option<(f64, SVector<f64, D>, Event)> {
        let (mut lo, mut hi) = (0.0, h);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let Ok((ym, _)) = self.step(t, y, mid) else {
                hi = mid;
                continue;
            };
            if let Ok(obs) = self.sys.observe(t + mid, &ym) {
                if let Some(event) = obs.stop {
                    return Some((t + mid, ym, event));
                }
            }
            match self.sys.direction(t + mid, &ym) {
                Some(d) if d.dot(d0) > 0.0 => lo = mid,
                _ => hi = mid,
            }
            if hi - lo <= f64::EPSILON * h {
                break;
            }
        }
        None
    }

    /// Post-step check for a reversal of the direction of motion.
    fn crossing(
        &mut self,
        t: f64,
        y: &SVector<f64, D>,
        h: f64,
        y1: &SVector<f64, D>,
    ) -> Option<Flow> {
        let d0 = self.sys.direction(t, y)?;
        let d1 = self.sys.direction(t + h, y1)?;
        if d0.dot(&d1) >= 0.0 {
            return None;
        }
        let (tc, yc, event) = self.locate_crossing(t, y, h, &d0)?;
        self.accepted += 1;
        if let Ok(obs) = self.sys.observe(tc, &yc) {
            self.traj.samples.push(obs.sample);
            self.last_recorded = self.accepted;
        }
        Some(self.stop_with(event))
    }

    /// A step from `y` could not be evaluated. If the stop threshold lies
    /// inside the step, stop there; otherwise report the failure at `y`.
    fn fail_step(&mut self, t: f64, y: &SVector<f64, D>, h: f64, err: FieldError) {
        if let Some(d0) = self.sys.direction(t, y) {
            if let Some((tc, yc, event)) = self.locate_crossing(t, y, h, &d0) {
                self.record_last(t, y);
                self.accepted += 1;
                if let Ok(obs) = self.sys.observe(tc, &yc) {
                    self.traj.samples.push(obs.sample);
                    self.last_recorded = self.accepted;
                }
                self.traj.events.push(event);
                return;
            }
        }
        self.record_last(t, y);
        self.traj.events.push(event_from_error(t, position(y), err));
    }

    fn run_fixed(&mut self, y0: SVector<f64, D>, t_end: f64) -> Result<(), DynamicsError> {
        let n = ((t_end / self.cfg.dt) - 1e-9).ceil().max(1.0) as usize;
        let h = t_end / n as f64;
        let mut y = y0;
        for k in 0..n {
            let t = k as f64 * h;
            let y1 = match self.step(t, &y, h) {
                Ok((y1, _)) => y1,
                Err(err) => {
                    self.fail_step(t, &y, h, err);
                    return Ok(());
                }
            };
            if let Some(Flow::Stop) = self.crossing(t, &y, h, &y1) {
                return Ok(());
            }
            let t1 = (k + 1) as f64 * h;
            if let Flow::Stop = self.accept(t1, &y1, k + 1 == n) {
                return Ok(());
            }
            y = y1;
        }
        self.traj.events.push(Event::Completed { t: t_end });
        Ok(())
    }

    fn run_adaptive(&mut self, y0: SVector<f64, D>, t_end: f64) -> Result<(), DynamicsError> {
        let mut y = y0;
        let mut t = 0.0;
        let mut h = self.cfg.dt.min(self.cfg.max_step).min(t_end);
        loop {
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }
            let (y1, err) = match self.step(t, &y, h) {
                Ok(r) => r,
                Err(err) => {
                    self.fail_step(t, &y, h, err);
                    return Ok(());
                }
            };
            if err <= 1.0 && y1.iter().all(|v| v.is_finite()) {
                if let Some(Flow::Stop) = self.crossing(t, &y, h, &y1) {
                    return Ok(());
                }
                let t1 = if last { t_end } else { t + h };
                if let Flow::Stop = self.accept(t1, &y1, last) {
                    return Ok(());
                }
                t = t1;
                y = y1;
                if last {
                    self.traj.events.push(Event::Completed { t: t_end });
                    return Ok(());
                }
                h = (h * dopri5_factor(err)).min(self.cfg.max_step);
            } else {
                let factor = if err.is_finite() { dopri5_factor(err).min(1.0) } else { 0.2 };
                h *= factor;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                self.record_last(t, &y);
                return Err(DynamicsError::StepUnderflow {
                    t,
                    state: y.iter().copied().collect(),
                    partial: Box::new(std::mem::replace(
                        &mut self.traj,
                        Trajectory::new(self.sys.kind()),
                    )),
                });
            }
        }
    }
}

/// Integrates `sys` from `y0` over `[0, t_end]`.
pub(crate) fn run<const D: usize, S: System<D>>(
    sys: &S,
    y0: SVector<f64, D>,
    cfg: &IntegratorConfig,
    t_end: f64,
) -> Result<Trajectory, DynamicsError> {
    cfg.validate().map_err(DynamicsError::InvalidInput)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(DynamicsError::InvalidInput(format!(
            "t_end must be positive and finite, got {t_end}"
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::InvalidInput("initial state is not finite".into()));
    }
    let mut driver = Driver {
        sys,
        cfg,
        traj: Trajectory::new(sys.kind()),
        accepted: 0,
        last_recorded: 0,
    };
    driver.traj.events.extend(sys.initial_events(&y0));
    match sys.observe(0.0, &y0) {
        Ok(obs) => {
            driver.traj.samples.push(obs.sample);
            if let Some(event) = obs.stop {
                driver.traj.events.push(event);
                sys.finish(&mut driver.traj);
                return Ok(driver.traj);
            }
        }
        Err(err) => {
            driver.traj.events.push(event_from_error(0.0, position(&y0), err));
            return Ok(driver.traj);
        }
    }
    let result = match cfg.method {
        Method::Rk4 => driver.run_fixed(y0, t_end),
        Method::Rk45 => driver.run_adaptive(y0, t_end),
    };
    match result {
        Ok(()) => {
            sys.finish(&mut driver.traj);
            Ok(driver.traj)
        }
        Err(DynamicsError::StepUnderflow { t, state, mut partial }) => {
            sys.finish(&mut partial);
            Err(DynamicsError::StepUnderflow { t, state, partial })
        }
        Err(other) => Err(other),
    }
}
