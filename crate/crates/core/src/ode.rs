//! Explicit Runge–Kutta steppers: classical fixed-step RK4 and the adaptive
//! Dormand–Prince 5(4) pair.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step size for RK4; initial step for RK45.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the RK45 step.
    pub max_step: f64,
    /// Record every n-th accepted step (the first and last states are
    /// always recorded).
    pub sample_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            dt: 1e-3,
            rtol: 1e-9,
            atol: 1e-9,
            max_step: 0.1,
            sample_every: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        IntegratorConfig {
            dt,
            ..Default::default()
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk45,
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn sampled_every(mut self, n: usize) -> Self {
        self.sample_every = n;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("integrator.{name} must be positive, got {v}"))
            }
        };
        positive("dt", self.dt)?;
        if self.method == Method::Rk45 {
            positive("rtol", self.rtol)?;
            positive("atol", self.atol)?;
            positive("max_step", self.max_step)?;
        }
        if self.sample_every == 0 {
            return Err("integrator.sample_every must be at least 1".into());
        }
        Ok(())
    }
}

/// One classical RK4 step of size `h`.
pub fn rk4_step<const D: usize, E>(
    f: &mut impl FnMut(f64, &SVector<f64, D>) -> Result<SVector<f64, D>, E>,
    t: f64,
    y: &SVector<f64, D>,
    h: f64,
) -> Result<SVector<f64, D>, E> {
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(y + k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(y + k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(y + k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth- minus fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One Dormand–Prince step. Returns the fifth-order solution and the
/// error estimate scaled by `atol + rtol·|y|` (accept when ≤ 1).
pub fn dopri5_step<const D: usize, E>(
    f: &mut impl FnMut(f64, &SVector<f64, D>) -> Result<SVector<f64, D>, E>,
    t: f64,
    y: &SVector<f64, D>,
    h: f64,
    atol: f64,
    rtol: f64,
) -> Result<(SVector<f64, D>, f64), E> {
    let k1 = f(t, y)?;
    let k2 = f(t + h / 5.0, &(y + k1 * (h * A21)))?;
    let k3 = f(t + 3.0 * h / 10.0, &(y + (k1 * A31 + k2 * A32) * h))?;
    let k4 = f(t + 4.0 * h / 5.0, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * h))?;
    let k5 = f(
        t + 8.0 * h / 9.0,
        &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h),
    )?;
    let k6 = f(
        t + h,
        &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h),
    )?;
    let y_new = y + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h;
    let k7 = f(t + h, &y_new)?;
    let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
    let mut sq = 0.0;
    for i in 0..D {
        let scale = atol + rtol * y[i].abs().max(y_new[i].abs());
        sq += (err[i] / scale).powi(2);
    }
    Ok((y_new, (sq / D as f64).sqrt()))
}

/// Step-size update factor for an error ratio from [`dopri5_step`].
pub fn dopri5_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}
