//! Second-order forward-mode dual numbers over three variables.
//!
//! A [`Jet`] carries a value, its gradient and the six unique entries of its
//! Hessian, so a single forward evaluation of an expression yields exact
//! first and second derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};

/// Index of `(i, j)` in the packed upper triangle `[xx, xy, xz, yy, yz, zz]`.
#[inline]
const fn packed(i: usize, j: usize) -> usize {
    const TABLE: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
    TABLE[i][j]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 3],
    /// Packed symmetric Hessian `[xx, xy, xz, yy, yz, zz]`.
    pub hess: [f64; 6],
}

impl Jet {
    pub const fn constant(value: f64) -> Self {
        Jet {
            value,
            grad: [0.0; 3],
            hess: [0.0; 6],
        }
    }

    /// The independent variable with index `axis` (0 = x, 1 = y, 2 = z).
    pub fn variable(value: f64, axis: usize) -> Self {
        let mut grad = [0.0; 3];
        grad[axis] = 1.0;
        Jet {
            value,
            grad,
            hess: [0.0; 6],
        }
    }

    /// Seeds the three coordinate variables at `point`.
    pub fn seed(point: &Vector3<f64>) -> [Jet; 3] {
        [
            Jet::variable(point.x, 0),
            Jet::variable(point.y, 1),
            Jet::variable(point.z, 2),
        ]
    }

    pub fn gradient(&self) -> Vector3<f64> {
        Vector3::from(self.grad)
    }

    pub fn hessian(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.hess[packed(i, j)])
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.value`.
    fn chain(&self, f: f64, df: f64, d2f: f64) -> Jet {
        let g = &self.grad;
        let mut grad = [0.0; 3];
        for (out, gi) in grad.iter_mut().zip(g) {
            *out = df * gi;
        }
        let mut hess = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                let k = packed(i, j);
                hess[k] = df * self.hess[k] + d2f * g[i] * g[j];
            }
        }
        Jet {
            value: f,
            grad,
            hess,
        }
    }

    pub fn sin(self) -> Jet {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn tan(self) -> Jet {
        let t = self.value.tan();
        let sec2 = 1.0 + t * t;
        self.chain(t, sec2, 2.0 * t * sec2)
    }

    pub fn exp(self) -> Jet {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    /// Natural logarithm; non-positive arguments yield NaN.
    pub fn ln(self) -> Jet {
        if self.value <= 0.0 {
            return Jet::nan();
        }
        let inv = 1.0 / self.value;
        self.chain(self.value.ln(), inv, -inv * inv)
    }

    /// Square root; derivatives are unbounded at zero, so non-positive
    /// arguments yield NaN.
    pub fn sqrt(self) -> Jet {
        if self.value <= 0.0 {
            return Jet::nan();
        }
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.value))
    }

    pub fn recip(self) -> Jet {
        if self.value == 0.0 {
            return Jet::nan();
        }
        let inv = 1.0 / self.value;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }

    pub fn powi(self, n: i32) -> Jet {
        match n {
            0 => Jet::constant(1.0),
            1 => self,
            _ if n < 0 && self.value == 0.0 => Jet::nan(),
            _ => {
                let v = self.value;
                let nf = f64::from(n);
                let d2 = if n == 2 {
                    2.0
                } else {
                    nf * (nf - 1.0) * v.powi(n - 2)
                };
                self.chain(v.powi(n), nf * v.powi(n - 1), d2)
            }
        }
    }

    fn nan() -> Jet {
        Jet {
            value: f64::NAN,
            grad: [f64::NAN; 3],
            hess: [f64::NAN; 6],
        }
    }
}

impl From<f64> for Jet {
    fn from(value: f64) -> Self {
        Jet::constant(value)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut out = self;
        out.value += rhs.value;
        for (a, b) in out.grad.iter_mut().zip(rhs.grad) {
            *a += b;
        }
        for (a, b) in out.hess.iter_mut().zip(rhs.hess) {
            *a += b;
        }
        out
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            value: -self.value,
            grad: self.grad.map(|g| -g),
            hess: self.hess.map(|h| -h),
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let (a, b) = (&self, &rhs);
        let mut grad = [0.0; 3];
        for i in 0..3 {
            grad[i] = a.value * b.grad[i] + b.value * a.grad[i];
        }
        let mut hess = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                let k = packed(i, j);
                hess[k] = a.value * b.hess[k]
                    + b.value * a.hess[k]
                    + a.grad[i] * b.grad[j]
                    + a.grad[j] * b.grad[i];
            }
        }
        Jet {
            value: a.value * b.value,
            grad,
            hess,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}
