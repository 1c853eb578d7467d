use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Additive disturbance `d(t)` acting on the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Disturbance {
    #[default]
    Zero,
    Constant {
        vector: [f64; 3],
    },
    /// `dᵢ(t) = amplitudeᵢ · sin(frequencyᵢ · t + phaseᵢ)`, frequencies in rad/s.
    Sinusoid {
        amplitude: [f64; 3],
        frequency: [f64; 3],
        phase: [f64; 3],
    },
    /// `d(t) = d0 · exp(−rate · t)`
    Decaying {
        d0: [f64; 3],
        rate: f64,
    },
}

impl Disturbance {
    pub fn eval(&self, t: f64) -> Vector3<f64> {
        match self {
            Disturbance::Zero => Vector3::zeros(),
            Disturbance::Constant { vector } => Vector3::from(*vector),
            Disturbance::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => Vector3::from_fn(|i, _| amplitude[i] * (frequency[i] * t + phase[i]).sin()),
            Disturbance::Decaying { d0, rate } => Vector3::from(*d0) * (-rate * t).exp(),
        }
    }

    /// `sup_{t ≥ 0} ‖d(t)‖` (an upper bound for sinusoids whose axes do not
    /// peak together).
    pub fn sup_norm(&self) -> f64 {
        match self {
            Disturbance::Zero => 0.0,
            Disturbance::Constant { vector } => Vector3::from(*vector).norm(),
            Disturbance::Sinusoid { amplitude, .. } => Vector3::from(*amplitude).norm(),
            Disturbance::Decaying { d0, .. } => Vector3::from(*d0).norm(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Disturbance::Zero)
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Disturbance::Zero => true,
            Disturbance::Constant { vector } => finite(vector),
            Disturbance::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => finite(amplitude) && finite(frequency) && finite(phase),
            Disturbance::Decaying { d0, rate } => finite(d0) && *rate > 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid disturbance {self:?}: values must be finite, decay rate positive"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_and_bounds() {
        let d = Disturbance::Decaying {
            d0: [0.0, 0.06, 0.08],
            rate: 1.0,
        };
        assert_eq!(d.sup_norm(), 0.1);
        assert!((d.eval(1.0).norm() - 0.1 / std::f64::consts::E).abs() < 1e-15);
        let s = Disturbance::Sinusoid {
            amplitude: [1.0, 0.0, 0.0],
            frequency: [2.0, 0.0, 0.0],
            phase: [0.0; 3],
        };
        for k in 0..100 {
            assert!(s.eval(k as f64 * 0.37).norm() <= s.sup_norm());
        }
        assert!(Disturbance::Decaying { d0: [0.0; 3], rate: 0.0 }.validate().is_err());
        assert_eq!(Disturbance::Zero.eval(3.0), Vector3::zeros());
    }
}
