use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{halton3, Aabb, AnalysisError, SingularPoint};
use crate::field::{sample_field, FieldParams};
use crate::path::ImplicitPath;

pub const DEFAULT_KAPPAS: [f64; 6] = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0];
const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    pub kappas: Vec<f64>,
    /// Points taken from the parametrization to represent P.
    pub path_samples: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            kappas: DEFAULT_KAPPAS.to_vec(),
            path_samples: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMethod {
    /// Nearest of a dense sample of the parametrization.
    Parametrization,
    /// Gauss–Newton projection onto `e = 0`; lower confidence.
    Projection,
}

/// Sampled infima at one distance threshold κ. `None` when no sample lies
/// that far from the set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    /// inf ‖e‖ over samples with dist(ξ, P) ≥ κ.
    pub inf_error: Option<f64>,
    pub error_samples: usize,
    /// inf ‖NKe‖ over samples with dist(ξ, M) ≥ κ.
    pub inf_nke: Option<f64>,
    pub nke_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Smallest distance between path samples and located singular
    /// points; infinite when none were located.
    #[serde(with = "float_or_inf")]
    pub est_dist_p_c: f64,
    pub estimates: Vec<KappaEstimate>,
    pub distance_method: DistanceMethod,
    pub low_confidence: bool,
    pub bbox: Aabb,
    pub samples: usize,
    /// Samples skipped because the path functions or the projection
    /// failed there.
    pub skipped: usize,
    pub note: String,
}

mod float_or_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            Err(serde::ser::Error::custom(format!("cannot serialize {v}")))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

/// Projects `xi` onto `e = 0` with minimum-norm Gauss–Newton steps and
/// returns the distance travelled.
fn projected_distance(path: &ImplicitPath, xi: &Vector3<f64>) -> Option<f64> {
    let mut p = *xi;
    for _ in 0..60 {
        let jets = path.eval(&p).ok()?;
        let e = nalgebra::Vector2::new(jets.phi1.value, jets.phi2.value);
        if e.norm() < 1e-13 {
            return Some((p - xi).norm());
        }
        let n = nalgebra::Matrix3x2::from_columns(&[jets.phi1.gradient, jets.phi2.gradient]);
        let gram: Matrix2<f64> = n.transpose() * n;
        let step = n * gram.try_inverse()? * e;
        p -= step;
        if !p.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    None
}

fn nearest(points: &[Vector3<f64>], xi: &Vector3<f64>) -> f64 {
    points.iter().map(|p| (p - xi).norm()).fold(f64::INFINITY, f64::min)
}

struct Probe {
    e_norm: f64,
    nke_norm: f64,
    dist_p: f64,
    dist_m: f64,
}

/// Sampled check of the three standing assumptions: P and C are apart,
/// ‖e‖ is bounded away from zero off P, ‖NKe‖ is bounded away from zero
/// off M. A sampled estimate can falsify, not certify.
pub fn probe_assumptions(
    path: &ImplicitPath,
    params: &FieldParams,
    singulars: &[SingularPoint],
    bbox: &Aabb,
    n_samples: usize,
    opts: &ProbeOptions,
) -> Result<AssumptionReport, AnalysisError> {
    if n_samples < MIN_SAMPLES {
        return Err(AnalysisError::InvalidInput(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if opts.kappas.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
        return Err(AnalysisError::InvalidInput("kappas must be finite and non-negative".into()));
    }
    let path_pts = path
        .parametrization()
        .map(|p| p.sample(opts.path_samples))
        .unwrap_or_default();
    let method = if path_pts.is_empty() {
        DistanceMethod::Projection
    } else {
        DistanceMethod::Parametrization
    };
    let dist_p = |xi: &Vector3<f64>| match method {
        DistanceMethod::Parametrization => Some(nearest(&path_pts, xi)),
        DistanceMethod::Projection => projected_distance(path, xi),
    };
    let c_pts: Vec<Vector3<f64>> = singulars.iter().map(|s| Vector3::from(s.location)).collect();

    let est_dist_p_c = match method {
        DistanceMethod::Parametrization => path_pts
            .iter()
            .map(|p| nearest(&c_pts, p))
            .fold(f64::INFINITY, f64::min),
        DistanceMethod::Projection => c_pts
            .iter()
            .filter_map(&dist_p)
            .fold(f64::INFINITY, f64::min),
    };

    let candidates: Vec<Vector3<f64>> = (0..n_samples as u64)
        .map(|i| bbox.lerp(halton3(i)))
        .chain(path_pts.iter().copied())
        .collect();
    let probes: Vec<Option<Probe>> = candidates
        .par_iter()
        .map(|xi| {
            let s = sample_field(path, params, xi).ok()?;
            let dp = dist_p(xi)?;
            Some(Probe {
                e_norm: s.e_norm(),
                nke_norm: s.nke_norm(),
                dist_p: dp,
                dist_m: dp.min(nearest(&c_pts, xi)),
            })
        })
        .collect();
    let skipped = probes.iter().filter(|p| p.is_none()).count();
    let probes: Vec<Probe> = probes.into_iter().flatten().collect();

    let estimates = opts
        .kappas
        .iter()
        .map(|&kappa| {
            let far_p: Vec<&Probe> = probes.iter().filter(|p| p.dist_p >= kappa).collect();
            let far_m: Vec<&Probe> = probes.iter().filter(|p| p.dist_m >= kappa).collect();
            KappaEstimate {
                kappa,
                inf_error: far_p.iter().map(|p| p.e_norm).reduce(f64::min),
                error_samples: far_p.len(),
                inf_nke: far_m.iter().map(|p| p.nke_norm).reduce(f64::min),
                nke_samples: far_m.len(),
            }
        })
        .collect();

    Ok(AssumptionReport {
        est_dist_p_c,
        estimates,
        distance_method: method,
        low_confidence: method == DistanceMethod::Projection,
        bbox: *bbox,
        samples: candidates.len(),
        skipped,
        note: "sampled estimate: can falsify, cannot certify".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::builtin_helix;

    #[test]
    fn helix_report() {
        let report = probe_assumptions(
            &builtin_helix(),
            &FieldParams::new(1.0, 1.0).unwrap(),
            &[],
            &Aabb::cube(-3.0, 3.0).unwrap(),
            2000,
            &ProbeOptions::default(),
        )
        .unwrap();
        assert_eq!(report.est_dist_p_c, f64::INFINITY);
        assert!(report.estimates[0].inf_error.unwrap() < 1e-12);
        for est in &report.estimates[2..] {
            assert!(est.inf_error.unwrap() > 0.0 && est.inf_nke.unwrap() > 0.0);
        }
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"est_dist_p_c\":\"inf\""));
        let back: AssumptionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn projection_fallback_is_flagged() {
        let path = ImplicitPath::from_expressions("y", "z").unwrap();
        let report = probe_assumptions(
            &path,
            &FieldParams::new(1.0, 1.0).unwrap(),
            &[],
            &Aabb::cube(-1.0, 1.0).unwrap(),
            1000,
            &ProbeOptions::default(),
        )
        .unwrap();
        assert!(report.low_confidence);
        assert_eq!(report.distance_method, DistanceMethod::Projection);
        // Distance to the x axis is exactly sqrt(y² + z²) = ‖e‖ here.
        let est = &report.estimates[3];
        assert!((est.inf_error.unwrap() - 0.2).abs() < 1e-2);
    }

    #[test]
    fn too_few_samples() {
        let r = probe_assumptions(
            &builtin_helix(),
            &FieldParams::new(1.0, 1.0).unwrap(),
            &[],
            &Aabb::cube(-1.0, 1.0).unwrap(),
            10,
            &ProbeOptions::default(),
        );
        assert!(r.is_err());
    }
}
