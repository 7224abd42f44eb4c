use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Linear,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn apply(self, x: &Matrix) -> Result<Matrix> {
        check_finite(x)?;
        Ok(x.map(|v| self.eval(v)))
    }

    pub fn apply_derivative(self, x: &Matrix) -> Result<Matrix> {
        check_finite(x)?;
        Ok(x.map(|v| self.derivative(v)))
    }
}

fn check_finite(x: &Matrix) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::non_finite("activation input"))
    }
}

/// Mean over all entries of the squared difference.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "mse",
            format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Empty("mse operands"));
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_symmetry_cases() {
        assert_eq!(Activation::Sigmoid.eval(0.0), 0.5);
        assert_eq!(Activation::Tanh.eval(0.0), 0.0);
        assert_eq!(Activation::Relu.eval(-2.0), 0.0);
        assert_eq!(Activation::Linear.eval(-2.0), -2.0);
    }

    #[test]
    fn sigmoid_at_one() {
        // 1 / (1 + e^-1)
        assert!((Activation::Sigmoid.eval(1.0) - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn derivatives_at_zero() {
        assert_eq!(Activation::Tanh.derivative(0.0), 1.0);
        assert_eq!(Activation::Sigmoid.derivative(0.0), 0.25);
        assert_eq!(Activation::Relu.derivative(-1.0), 0.0);
        assert_eq!(Activation::Relu.derivative(3.0), 1.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for act in [Activation::Sigmoid, Activation::Tanh, Activation::Linear] {
            for &x in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
                let fd = (act.eval(x + h) - act.eval(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-9, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let x = Matrix::column(&[0.0, f64::NAN]);
        assert!(matches!(
            Activation::Tanh.apply(&x),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn mse_cases() {
        let t = Matrix::column(&[0.2, 0.4, 0.9]);
        assert_eq!(mse(&t, &t).unwrap(), 0.0);
        let shifted = t.map(|v| v + 0.1);
        assert!((mse(&shifted, &t).unwrap() - 0.01).abs() < 1e-15);
        let p = Matrix::column(&[0.0, 1.0]);
        let q = Matrix::column(&[1.0, 0.0]);
        assert_eq!(mse(&p, &q).unwrap(), 1.0);
        assert!(mse(&p, &t).is_err());
    }

    proptest! {
        #[test]
        fn squashing_ranges(x in -1e3f64..1e3) {
            let s = Activation::Sigmoid.eval(x);
            let t = Activation::Tanh.eval(x);
            // saturation to exactly 0/1 only happens beyond |x| ~ 37; keep
            // the open-interval claim on the representable range
            if x.abs() < 30.0 {
                prop_assert!(s > 0.0 && s < 1.0);
            } else {
                prop_assert!((0.0..=1.0).contains(&s));
            }
            if x.abs() < 19.0 {
                prop_assert!(t > -1.0 && t < 1.0);
            } else {
                prop_assert!((-1.0..=1.0).contains(&t));
            }
        }
    }
}
