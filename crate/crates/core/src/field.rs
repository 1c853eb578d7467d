//! Pointwise quantities of the guiding vector field
//! `χ(ξ) = n₁ × n₂ − k₁e₁n₁ − k₂e₂n₂`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::{ImplicitPath, PathError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("invalid gains k1 = {k1}, k2 = {k2}: both must be positive and finite")]
    InvalidGains { k1: f64, k2: f64 },
    #[error("vector field vanishes at ({}, {}, {}) (|chi| = {chi_norm:e})", .point[0], .point[1], .point[2])]
    Singular { point: [f64; 3], chi_norm: f64 },
    #[error("planar part of the field vanishes at ({}, {}, {})", .point[0], .point[1], .point[2])]
    PlanarDegenerate { point: [f64; 3] },
}

/// Convergence gains `K = diag(k₁, k₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGains")]
pub struct FieldParams {
    k1: f64,
    k2: f64,
}

#[derive(Deserialize)]
struct RawGains {
    k1: f64,
    k2: f64,
}

impl TryFrom<RawGains> for FieldParams {
    type Error = FieldError;
    fn try_from(raw: RawGains) -> Result<Self, Self::Error> {
        FieldParams::new(raw.k1, raw.k2)
    }
}

impl FieldParams {
    pub fn new(k1: f64, k2: f64) -> Result<Self, FieldError> {
        if k1 > 0.0 && k2 > 0.0 && k1.is_finite() && k2.is_finite() {
            Ok(FieldParams { k1, k2 })
        } else {
            Err(FieldError::InvalidGains { k1, k2 })
        }
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn k_min(&self) -> f64 {
        self.k1.min(self.k2)
    }

    pub fn k_max(&self) -> f64 {
        self.k1.max(self.k2)
    }

    pub fn gain_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.k1, 0.0, 0.0, self.k2)
    }

    /// `√(k_max / k_min)`, the overshoot constant of the exponential envelope.
    pub fn envelope_constant(&self) -> f64 {
        (self.k_max() / self.k_min()).sqrt()
    }
}

/// Scale-aware threshold below which `‖χ‖` is treated as zero.
pub fn singular_threshold(tau_norm: f64, nke_norm: f64) -> f64 {
    1e-9 * (1.0 + tau_norm + nke_norm)
}

/// Every field quantity at a single point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub xi: Vector3<f64>,
    /// `(φ₁(ξ), φ₂(ξ))`
    pub e: Vector2<f64>,
    /// Columns `n₁ = ∇φ₁`, `n₂ = ∇φ₂`.
    pub n: Matrix3x2<f64>,
    pub tau: Vector3<f64>,
    /// `N K e`, the gradient of `V`.
    pub nke: Vector3<f64>,
    pub chi: Vector3<f64>,
    pub chi_hat: Option<Vector3<f64>>,
    pub v: f64,
    pub q: Matrix2<f64>,
}

/// `Q` together with its eigenvalues in ascending order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QSpectrum {
    pub q: Matrix2<f64>,
    pub eigenvalues: [f64; 2],
}

impl QSpectrum {
    pub fn det(&self) -> f64 {
        self.q.determinant()
    }

    pub fn trace(&self) -> f64 {
        self.q.trace()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Membership tolerances for the sets M, C and C'.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Threshold on `‖NKe‖` for membership in M.
    pub eps_m: f64,
    /// Threshold on `‖τ‖` for rank deficiency of N.
    pub eps_rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_m: 1e-8,
            eps_rank: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMembership {
    pub in_m: bool,
    pub in_c: bool,
    pub in_c_prime: bool,
    pub tolerances: Tolerances,
    /// The point lies within one tolerance of the boundary of M, so the
    /// M / C' split depends on the tolerance choice.
    pub near_m_boundary: bool,
}

/// Serializable view of a [`FieldSample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub xi: [f64; 3],
    pub e: [f64; 2],
    pub n1: [f64; 3],
    pub n2: [f64; 3],
    pub tau: [f64; 3],
    pub chi: [f64; 3],
    pub chi_hat: Option<[f64; 3]>,
    pub v: f64,
    pub q: [[f64; 2]; 2],
}

impl FieldSample {
    pub fn n1(&self) -> Vector3<f64> {
        self.n.column(0).into_owned()
    }

    pub fn n2(&self) -> Vector3<f64> {
        self.n.column(1).into_owned()
    }

    pub fn e_norm(&self) -> f64 {
        self.e.norm()
    }

    pub fn nke_norm(&self) -> f64 {
        self.nke.norm()
    }

    pub fn chi_norm(&self) -> f64 {
        self.chi.norm()
    }

    pub fn q_spectrum(&self) -> QSpectrum {
        q_spectrum(&self.q)
    }

    pub fn classify(&self, tol: &Tolerances) -> SetMembership {
        let nke = self.nke_norm();
        let tau = self.tau.norm();
        let in_m = nke <= tol.eps_m;
        let rank_deficient = tau <= tol.eps_rank;
        SetMembership {
            in_m,
            in_c: in_m && rank_deficient,
            in_c_prime: !in_m && rank_deficient,
            tolerances: *tol,
            near_m_boundary: (nke - tol.eps_m).abs() <= tol.eps_m,
        }
    }

    pub fn to_record(&self) -> FieldRecord {
        FieldRecord {
            xi: self.xi.into(),
            e: self.e.into(),
            n1: self.n1().into(),
            n2: self.n2().into(),
            tau: self.tau.into(),
            chi: self.chi.into(),
            chi_hat: self.chi_hat.map(Into::into),
            v: self.v,
            q: [[self.q[(0, 0)], self.q[(0, 1)]], [self.q[(1, 0)], self.q[(1, 1)]]],
        }
    }
}

/// Eigen-decomposition of a symmetric 2×2 matrix.
pub fn q_spectrum(q: &Matrix2<f64>) -> QSpectrum {
    let (a, b, d) = (q[(0, 0)], 0.5 * (q[(0, 1)] + q[(1, 0)]), q[(1, 1)]);
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let hi = mean + radius;
    // Product form for the small root avoids cancellation when Q is nearly singular.
    let det = a * d - b * b;
    let lo = if hi > 0.0 { det / hi } else { mean - radius };
    QSpectrum {
        q: *q,
        eigenvalues: [lo.min(hi), hi],
    }
}

pub fn sample_field(
    path: &ImplicitPath,
    params: &FieldParams,
    xi: &Vector3<f64>,
) -> Result<FieldSample, FieldError> {
    let jets = path.eval(xi)?;
    let n1 = jets.phi1.gradient;
    let n2 = jets.phi2.gradient;
    let e = Vector2::new(jets.phi1.value, jets.phi2.value);
    let n = Matrix3x2::from_columns(&[n1, n2]);
    let tau = n1.cross(&n2);
    let nke = n1 * (params.k1 * e.x) + n2 * (params.k2 * e.y);
    let chi = tau - nke;
    let chi_norm = chi.norm();
    let chi_hat = (chi_norm > singular_threshold(tau.norm(), nke.norm())).then(|| chi / chi_norm);
    let nk = n * params.gain_matrix();
    Ok(FieldSample {
        xi: *xi,
        e,
        n,
        tau,
        nke,
        chi,
        chi_hat,
        v: 0.5 * (params.k1 * e.x * e.x + params.k2 * e.y * e.y),
        q: nk.transpose() * nk,
    })
}

/// `∂χ/∂ξ`, assembled from the Hessians of φ₁ and φ₂.
pub fn field_jacobian(
    path: &ImplicitPath,
    params: &FieldParams,
    xi: &Vector3<f64>,
) -> Result<Matrix3<f64>, FieldError> {
    let jets = path.eval(xi)?;
    Ok(field_jacobian_from(&jets, params))
}

fn field_jacobian_from(jets: &crate::path::PathJets, params: &FieldParams) -> Matrix3<f64> {
    let (n1, n2) = (jets.phi1.gradient, jets.phi2.gradient);
    let (h1, h2) = (jets.phi1.hessian, jets.phi2.hessian);
    // d(n₁ × n₂)/dξⱼ = (H₁eⱼ) × n₂ + n₁ × (H₂eⱼ)
    let dtau = Matrix3::from_columns(&[0, 1, 2].map(|j| {
        h1.column(j).into_owned().cross(&n2) + n1.cross(&h2.column(j).into_owned())
    }));
    // d(eᵢnᵢ)/dξ = nᵢnᵢᵀ + eᵢHᵢ
    let d1 = n1 * n1.transpose() + h1 * jets.phi1.value;
    let d2 = n2 * n2.transpose() + h2 * jets.phi2.value;
    dtau - d1 * params.k1 - d2 * params.k2
}

/// Jacobian of the normalized field `χ̂ = χ/‖χ‖`.
pub fn normalized_field_jacobian(
    path: &ImplicitPath,
    params: &FieldParams,
    xi: &Vector3<f64>,
) -> Result<(FieldSample, Matrix3<f64>), FieldError> {
    let sample = sample_field(path, params, xi)?;
    let chi_hat = sample.chi_hat.ok_or(FieldError::Singular {
        point: (*xi).into(),
        chi_norm: sample.chi_norm(),
    })?;
    let jets = path.eval(xi)?;
    let j = field_jacobian_from(&jets, params);
    let proj = Matrix3::identity() - chi_hat * chi_hat.transpose();
    Ok((sample, proj * j / sample.chi_norm()))
}

/// `J(χᵖ)`: Jacobian of the first two entries of `χ̂` with respect to ξ.
pub fn jacobian_planar_field(
    path: &ImplicitPath,
    params: &FieldParams,
    xi: &Vector3<f64>,
) -> Result<Matrix2x3<f64>, FieldError> {
    let (_, j) = normalized_field_jacobian(path, params, xi)?;
    Ok(j.fixed_rows::<2>(0).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{builtin_cylinder_intersection, builtin_helix};

    fn unit() -> FieldParams {
        FieldParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn gains_validation() {
        assert!(FieldParams::new(0.0, 1.0).is_err());
        assert!(FieldParams::new(1.0, f64::NAN).is_err());
        let p = FieldParams::new(3.0, 0.5).unwrap();
        assert_eq!((p.k_min(), p.k_max()), (0.5, 3.0));
        assert!((p.envelope_constant() - 6f64.sqrt()).abs() < 1e-15);
        let parsed: Result<FieldParams, _> = serde_json::from_str(r#"{"k1": -1, "k2": 1}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn helix_on_path_field_is_tangent() {
        let s = sample_field(&builtin_helix(), &unit(), &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.e, Vector2::zeros());
        assert_eq!(s.tau, Vector3::new(0.0, 1.0, 1.0));
        assert_eq!(s.chi, s.tau);
        assert_eq!(s.v, 0.0);
    }

    #[test]
    fn helix_off_path_hand_evaluation() {
        let s = sample_field(&builtin_helix(), &unit(), &Vector3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.e, Vector2::new(1.0, 0.0));
        assert_eq!(s.n1(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s.n2(), Vector3::new(0.0, 1.0, -1.0));
        assert_eq!(s.tau, Vector3::new(0.0, 1.0, 1.0));
        assert_eq!(s.chi, Vector3::new(-1.0, 1.0, 1.0));
        assert!((s.chi_hat.unwrap().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn helix_q_determinant() {
        for z in [-3.0, 0.0, 0.4, 2.0] {
            let s = sample_field(&builtin_helix(), &unit(), &Vector3::new(0.3, -0.2, z)).unwrap();
            let spec = s.q_spectrum();
            assert!((spec.det() - 2.0).abs() < 1e-12);
            assert!((spec.eigenvalues[0] - 1.0).abs() < 1e-12);
            assert!((spec.eigenvalues[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_q_is_zero() {
        let spec = q_spectrum(&Matrix2::zeros());
        assert_eq!(spec.eigenvalues, [0.0, 0.0]);
    }

    #[test]
    fn cylinder_q_two_routes() {
        let path = builtin_cylinder_intersection(0.0, 1.5, 2.0, 1.0).unwrap();
        let params = FieldParams::new(2.0, 2.0).unwrap();
        let s = sample_field(&path, &params, &Vector3::new(1.0, 0.0, 1.5)).unwrap();
        // n1 = (2, 0, 0), n2 = (0, 0, 3): brute-force K NᵀN K
        let n = [[2.0, 0.0, 0.0], [0.0, 0.0, 3.0]];
        let k = [2.0, 2.0];
        for i in 0..2 {
            for j in 0..2 {
                let dot: f64 = (0..3).map(|c| n[i][c] * n[j][c]).sum();
                assert_eq!(s.q[(i, j)], k[i] * dot * k[j]);
            }
        }
        let tau2 = s.tau.norm_squared();
        assert!((s.q_spectrum().det() - 16.0 * tau2).abs() <= 1e-9 * 16.0 * tau2);
    }

    #[test]
    fn classification() {
        let helix = builtin_helix();
        let tol = Tolerances::default();
        let on = sample_field(&helix, &unit(), &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let m = on.classify(&tol);
        assert!(m.in_m && !m.in_c && !m.in_c_prime);
        let off = sample_field(&helix, &unit(), &Vector3::new(3.0, 1.0, -2.0)).unwrap();
        assert!(!off.classify(&tol).in_c);

        let cyl = builtin_cylinder_intersection(0.0, 1.5, 2.0, 1.0).unwrap();
        let params = FieldParams::new(2.0, 2.0).unwrap();
        let l1 = sample_field(&cyl, &params, &Vector3::new(0.0, 0.5, 1.5)).unwrap();
        let m = l1.classify(&tol);
        assert!(m.in_c_prime && !m.in_m && !m.in_c);
    }

    #[test]
    fn straight_line_jacobian_has_no_x_dependence() {
        let path = ImplicitPath::from_expressions("y", "z").unwrap();
        let j = jacobian_planar_field(&path, &unit(), &Vector3::new(4.0, 0.0, 0.0)).unwrap();
        assert_eq!(j.column(0).into_owned(), nalgebra::Vector2::zeros());
    }

    #[test]
    fn jacobian_refuses_singular_points() {
        // n1 = n2 and e = 0 at the origin, so chi = 0 there.
        let path = ImplicitPath::from_expressions("x", "x").unwrap();
        let err = jacobian_planar_field(&path, &unit(), &Vector3::zeros()).unwrap_err();
        assert!(matches!(err, FieldError::Singular { .. }));
    }
}
