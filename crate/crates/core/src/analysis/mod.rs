//! Numerical certification: singular-point location, assumption probes,
//! convergence-rate extraction, phase-portrait comparison and ISS sweeps.
//!
//! Everything here is sample based. The estimates can falsify a property
//! of the field but cannot prove it.

mod iss;
mod portrait;
mod probe;
mod rate;
mod singular;

pub use iss::{iss_ultimate_bound, DisturbanceProfile, IssEntry, IssOptions, IssSweep};
pub use portrait::{curve_distance, phase_portrait_distance, resample_by_arc_length, PORTRAIT_POINTS};
pub use probe::{probe_assumptions, DEFAULT_KAPPAS, AssumptionReport, DistanceMethod, KappaEstimate, ProbeOptions};
pub use rate::{
    error_tube_grid, fit_convergence, min_q_eigenvalue, LambdaBound, RateFit, ENVELOPE_MARGIN,
};
pub use singular::{find_singular_points, SingularPoint, SingularSearch};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::field::FieldError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("trajectory has not converged: {0}")]
    NotConverged(String),
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, AnalysisError> {
        let ok = (0..3).all(|i| min[i].is_finite() && max[i].is_finite() && min[i] < max[i]);
        if ok {
            Ok(Aabb { min, max })
        } else {
            Err(AnalysisError::InvalidInput(format!(
                "box needs finite bounds with min < max, got {min:?}..{max:?}"
            )))
        }
    }

    /// `[lo, hi]³`
    pub fn cube(lo: f64, hi: f64) -> Result<Self, AnalysisError> {
        Aabb::new([lo; 3], [hi; 3])
    }

    /// Point at fractional coordinates `u ∈ [0, 1]³`.
    pub fn lerp(&self, u: [f64; 3]) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.min[i] + (self.max[i] - self.min[i]) * u[i])
    }

    pub fn contains(&self, p: &Vector3<f64>, slack: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - slack && p[i] <= self.max[i] + slack)
    }

    pub fn diagonal(&self) -> f64 {
        (Vector3::from(self.max) - Vector3::from(self.min)).norm()
    }

    /// Regular grid with `n` points per axis, x varying slowest.
    pub fn grid(&self, n: usize) -> Vec<Vector3<f64>> {
        let coord = |k: usize| k as f64 / (n - 1) as f64;
        let mut pts = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    pts.push(self.lerp([coord(i), coord(j), coord(k)]));
                }
            }
        }
        pts
    }
}

/// Radical inverse of `index` in `base` (van der Corput sequence).
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// The `i`-th point of the 3D Halton sequence (bases 2, 3, 5), skipping
/// the origin.
pub fn halton3(i: u64) -> [f64; 3] {
    [
        radical_inverse(i + 1, 2),
        radical_inverse(i + 1, 3),
        radical_inverse(i + 1, 5),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_prefix() {
        assert_eq!(halton3(0), [0.5, 1.0 / 3.0, 0.2]);
        assert_eq!(halton3(1), [0.25, 2.0 / 3.0, 0.4]);
        assert_eq!(halton3(2)[0], 0.75);
    }

    #[test]
    fn box_validation_and_grid() {
        assert!(Aabb::cube(1.0, 1.0).is_err());
        let b = Aabb::cube(-1.0, 1.0).unwrap();
        let g = b.grid(3);
        assert_eq!(g.len(), 27);
        assert_eq!(g[0], Vector3::new(-1.0, -1.0, -1.0));
        assert_eq!(g[26], Vector3::new(1.0, 1.0, 1.0));
        assert!(b.contains(&Vector3::new(1.0 + 1e-12, 0.0, 0.0), 1e-9));
    }
}
