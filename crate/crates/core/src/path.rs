//! Desired paths as the intersection of two implicit surfaces.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_expression, Expr, ParseError};
use crate::jet::Jet;

/// Value, gradient and Hessian of a scalar field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

impl FieldJet {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.gradient.iter().all(|v| v.is_finite())
            && self.hessian.iter().all(|v| v.is_finite())
    }
}

impl From<Jet> for FieldJet {
    fn from(j: Jet) -> Self {
        FieldJet {
            value: j.value,
            gradient: j.gradient(),
            hessian: j.hessian(),
        }
    }
}

/// A twice continuously differentiable map R³ → R.
///
/// Evaluation never fails; points outside the field's domain produce
/// non-finite entries, which [`ImplicitPath::eval`] turns into a
/// [`PathError::Domain`].
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn eval(&self, xi: &Vector3<f64>) -> FieldJet;
}

/// A scalar field compiled from an [`Expr`], differentiated with second-order
/// forward-mode duals.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledField {
    expr: Expr,
}

impl CompiledField {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl ScalarField for CompiledField {
    fn eval(&self, xi: &Vector3<f64>) -> FieldJet {
        self.expr.eval_jet(&Jet::seed(xi)).into()
    }
}

pub fn compile_field(expr: Expr) -> CompiledField {
    CompiledField { expr }
}

/// Closed-form fields used by the built-in paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticField {
    /// `(x - a)^2 + (z - b)^2 - r^2`
    CylinderAlongY { a: f64, b: f64, r: f64 },
    /// `y^2 + z^2 - R^2`
    CylinderAlongX { radius: f64 },
    /// `x - cos z`
    HelixX,
    /// `y - sin z`
    HelixY,
}

impl ScalarField for AnalyticField {
    fn eval(&self, xi: &Vector3<f64>) -> FieldJet {
        let (x, y, z) = (xi.x, xi.y, xi.z);
        match *self {
            AnalyticField::CylinderAlongY { a, b, r } => FieldJet {
                value: (x - a).powi(2) + (z - b).powi(2) - r * r,
                gradient: Vector3::new(2.0 * (x - a), 0.0, 2.0 * (z - b)),
                hessian: Matrix3::from_diagonal(&Vector3::new(2.0, 0.0, 2.0)),
            },
            AnalyticField::CylinderAlongX { radius } => FieldJet {
                value: y * y + z * z - radius * radius,
                gradient: Vector3::new(0.0, 2.0 * y, 2.0 * z),
                hessian: Matrix3::from_diagonal(&Vector3::new(0.0, 2.0, 2.0)),
            },
            AnalyticField::HelixX => {
                let (s, c) = z.sin_cos();
                let mut hessian = Matrix3::zeros();
                hessian[(2, 2)] = c;
                FieldJet {
                    value: x - c,
                    gradient: Vector3::new(1.0, 0.0, s),
                    hessian,
                }
            }
            AnalyticField::HelixY => {
                let (s, c) = z.sin_cos();
                let mut hessian = Matrix3::zeros();
                hessian[(2, 2)] = s;
                FieldJet {
                    value: y - s,
                    gradient: Vector3::new(0.0, 1.0, -c),
                    hessian,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundedness {
    Bounded,
    Unbounded,
    Unknown,
}

/// Maps a scalar parameter onto points of the path. Parameters outside the
/// image (e.g. the gap between branches) map to `None`.
#[derive(Clone)]
pub struct Parametrization {
    pub domain: (f64, f64),
    map: Arc<dyn Fn(f64) -> Option<Vector3<f64>> + Send + Sync>,
}

impl fmt::Debug for Parametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Parametrization")
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl Parametrization {
    pub fn new(
        domain: (f64, f64),
        map: impl Fn(f64) -> Option<Vector3<f64>> + Send + Sync + 'static,
    ) -> Self {
        Parametrization {
            domain,
            map: Arc::new(map),
        }
    }

    pub fn point(&self, u: f64) -> Option<Vector3<f64>> {
        (self.map)(u)
    }

    /// Evaluates the map on `n` evenly spaced parameters and keeps the
    /// points that exist.
    pub fn sample(&self, n: usize) -> Vec<Vector3<f64>> {
        let (lo, hi) = self.domain;
        let n = n.max(2);
        (0..n)
            .filter_map(|i| self.point(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("invalid path parameter: {0}")]
    InvalidParameter(String),
    #[error("expression for {which}: {source}")]
    Parse {
        which: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("surface functions are not evaluable at ({}, {}, {})", .point[0], .point[1], .point[2])]
    Domain { point: [f64; 3] },
}

/// Jets of both surface functions at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathJets {
    pub phi1: FieldJet,
    pub phi2: FieldJet,
}

/// The desired path `{ξ : φ₁(ξ) = 0, φ₂(ξ) = 0}`.
#[derive(Debug, Clone)]
pub struct ImplicitPath {
    phi1: Arc<dyn ScalarField>,
    phi2: Arc<dyn ScalarField>,
    pub boundedness: Boundedness,
    parametrization: Option<Parametrization>,
}

impl ImplicitPath {
    pub fn new(phi1: Arc<dyn ScalarField>, phi2: Arc<dyn ScalarField>) -> Self {
        ImplicitPath {
            phi1,
            phi2,
            boundedness: Boundedness::Unknown,
            parametrization: None,
        }
    }

    /// Parses and compiles both surface expressions.
    pub fn from_expressions(phi1: &str, phi2: &str) -> Result<Self, PathError> {
        let compile = |which, src| {
            parse_expression(src)
                .map(|e| Arc::new(compile_field(e)) as Arc<dyn ScalarField>)
                .map_err(|source| PathError::Parse { which, source })
        };
        Ok(ImplicitPath::new(compile("phi1", phi1)?, compile("phi2", phi2)?))
    }

    pub fn with_boundedness(mut self, hint: Boundedness) -> Self {
        self.boundedness = hint;
        self
    }

    pub fn with_parametrization(mut self, p: Parametrization) -> Self {
        self.parametrization = Some(p);
        self
    }

    pub fn parametrization(&self) -> Option<&Parametrization> {
        self.parametrization.as_ref()
    }

    pub fn phi1(&self) -> &dyn ScalarField {
        self.phi1.as_ref()
    }

    pub fn phi2(&self) -> &dyn ScalarField {
        self.phi2.as_ref()
    }

    pub fn eval(&self, xi: &Vector3<f64>) -> Result<PathJets, PathError> {
        let jets = PathJets {
            phi1: self.phi1.eval(xi),
            phi2: self.phi2.eval(xi),
        };
        if jets.phi1.is_finite() && jets.phi2.is_finite() {
            Ok(jets)
        } else {
            Err(PathError::Domain { point: (*xi).into() })
        }
    }

    /// `(φ₁, φ₂)` without derivatives; NaN outside the domain.
    pub fn error(&self, xi: &Vector3<f64>) -> [f64; 2] {
        [self.phi1.eval(xi).value, self.phi2.eval(xi).value]
    }
}

/// Intersection of the cylinder `(x−a)² + (z−b)² = r²` (axis along y) with
/// the cylinder `y² + z² = R²` (axis along x).
pub fn builtin_cylinder_intersection(
    a: f64,
    b: f64,
    big_r: f64,
    r: f64,
) -> Result<ImplicitPath, PathError> {
    if !(big_r > 0.0 && r > 0.0) || !a.is_finite() || !b.is_finite() || !big_r.is_finite() || !r.is_finite() {
        return Err(PathError::InvalidParameter(format!(
            "cylinder radii must be positive and finite (R = {big_r}, r = {r})"
        )));
    }
    // u ∈ [0, 2π) walks the circle with y ≥ 0, u ∈ [2π, 4π) with y ≤ 0.
    let param = Parametrization::new((0.0, 4.0 * PI), move |u| {
        let (t, sign) = if u < 2.0 * PI { (u, 1.0) } else { (u - 2.0 * PI, -1.0) };
        let x = a + r * t.cos();
        let z = b + r * t.sin();
        let y2 = big_r * big_r - z * z;
        (y2 >= 0.0).then(|| Vector3::new(x, sign * y2.sqrt(), z))
    });
    Ok(ImplicitPath::new(
        Arc::new(AnalyticField::CylinderAlongY { a, b, r }),
        Arc::new(AnalyticField::CylinderAlongX { radius: big_r }),
    )
    .with_boundedness(Boundedness::Bounded)
    .with_parametrization(param))
}

/// Unit helix `x = cos z, y = sin z`, parametrized by `z ∈ [−10, 10]`.
pub fn builtin_helix() -> ImplicitPath {
    ImplicitPath::new(Arc::new(AnalyticField::HelixX), Arc::new(AnalyticField::HelixY))
        .with_boundedness(Boundedness::Unbounded)
        .with_parametrization(helix_parametrization((-10.0, 10.0)))
}

pub fn helix_parametrization(domain: (f64, f64)) -> Parametrization {
    Parametrization::new(domain, |t| Some(Vector3::new(t.cos(), t.sin(), t)))
}
