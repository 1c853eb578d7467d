use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Aabb, AnalysisError};
use crate::field::{sample_field, FieldParams};
use crate::path::ImplicitPath;
use crate::trajectory::Trajectory;

/// Λ from a finite sample overestimates the true minimum, so the envelope
/// check uses this fraction of it.
pub const ENVELOPE_MARGIN: f64 = 0.99;
/// Envelope values below this are under rounding noise and not checked.
const ENVELOPE_FLOOR: f64 = 1e-12;
const FIT_LOWER: f64 = 1e-8;

/// Smallest eigenvalue of `Q` seen over a sample of a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBound {
    pub lambda: f64,
    pub samples: usize,
}

impl LambdaBound {
    pub fn new(lambda: f64) -> Result<Self, AnalysisError> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(LambdaBound { lambda, samples: 0 })
        } else {
            Err(AnalysisError::InvalidInput(format!("Λ must be positive, got {lambda}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Slope of the log-linear fit, negated (1/s).
    pub fitted_rate: f64,
    /// `Λ / k_max`
    pub theoretical_rate: f64,
    pub lambda: f64,
    /// `√(k_max / k_min)`
    pub envelope_constant: f64,
    pub envelope_margin: f64,
    pub violations: usize,
    /// Samples the envelope was checked at.
    pub checked: usize,
    pub window: [f64; 2],
    pub window_points: usize,
}

/// Grid points of `bbox` inside the tube `‖e‖ ≤ delta`.
pub fn error_tube_grid(path: &ImplicitPath, bbox: &Aabb, grid_n: usize, delta: f64) -> Vec<Vector3<f64>> {
    if grid_n < 2 {
        return Vec::new();
    }
    bbox.grid(grid_n)
        .into_par_iter()
        .filter(|p| {
            let [e1, e2] = path.error(p);
            e1.hypot(e2) <= delta
        })
        .collect()
}

pub fn min_q_eigenvalue(
    path: &ImplicitPath,
    params: &FieldParams,
    points: &[Vector3<f64>],
) -> Result<LambdaBound, AnalysisError> {
    if points.is_empty() {
        return Err(AnalysisError::InvalidInput("no sample points for Λ".into()));
    }
    let lambdas: Vec<f64> = points
        .par_iter()
        .map(|p| sample_field(path, params, p).map(|s| s.q_spectrum().lambda_min()))
        .collect::<Result<_, _>>()?;
    Ok(LambdaBound {
        lambda: lambdas.into_iter().fold(f64::INFINITY, f64::min),
        samples: points.len(),
    })
}

/// Fits the decay rate of `‖e(t)‖` and checks it against
/// `c‖e₀‖exp(−0.99 Λ t / k_max)` at every sample.
pub fn fit_convergence(
    traj: &Trajectory,
    params: &FieldParams,
    region: &LambdaBound,
) -> Result<RateFit, AnalysisError> {
    let (first, last) = match (traj.samples.first(), traj.samples.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(AnalysisError::InvalidInput("no samples".into())),
    };
    let e0 = first.e_norm();
    let e_end = last.e_norm();
    if !(e0 > 0.0) || !(e_end < 0.1 * e0) {
        return Err(AnalysisError::NotConverged(format!(
            "final error {e_end:e} is not below a tenth of the initial error {e0:e}"
        )));
    }
    let t0 = first.t;
    let (c, k_max) = (params.envelope_constant(), params.k_max());
    let decay = ENVELOPE_MARGIN * region.lambda / k_max;

    let mut violations = 0;
    let mut checked = 0;
    let mut window: Vec<(f64, f64)> = Vec::new();
    for s in &traj.samples {
        let t = s.t - t0;
        let e = s.e_norm();
        let envelope = c * e0 * (-decay * t).exp();
        if envelope >= ENVELOPE_FLOOR {
            checked += 1;
            if e > envelope {
                violations += 1;
            }
        }
        if e >= FIT_LOWER && e <= 0.5 * e0 {
            window.push((t, e.ln()));
        }
    }
    if window.len() < 2 {
        return Err(AnalysisError::NotConverged(format!(
            "only {} samples with error in [{FIT_LOWER:e}, {:e}]",
            window.len(),
            0.5 * e0
        )));
    }
    let n = window.len() as f64;
    let mt = window.iter().map(|w| w.0).sum::<f64>() / n;
    let ml = window.iter().map(|w| w.1).sum::<f64>() / n;
    let sxy: f64 = window.iter().map(|w| (w.0 - mt) * (w.1 - ml)).sum();
    let sxx: f64 = window.iter().map(|w| (w.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::NotConverged("fit window spans no time".into()));
    }

    Ok(RateFit {
        fitted_rate: -sxy / sxx,
        theoretical_rate: region.lambda / k_max,
        lambda: region.lambda,
        envelope_constant: c,
        envelope_margin: ENVELOPE_MARGIN,
        violations,
        checked,
        window: [window[0].0, window[window.len() - 1].0],
        window_points: window.len(),
    })
}
