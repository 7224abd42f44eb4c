use super::Matrix;
use crate::error::{Error, Result};

/// A named trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            value,
            grad: Matrix::zeros(r, c),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(params: &[ParamGroup]) -> Self {
        Self::with_moments(params, Self::BETA1, Self::BETA2, Self::EPSILON)
    }

    pub fn with_moments(params: &[ParamGroup], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update over every group, in place.
///
/// All gradients are checked before any parameter is touched, so a
/// non-finite gradient leaves both the parameters and the state unchanged.
pub fn adam_step(params: &mut [ParamGroup], state: &mut AdamState, learn_rate: f64) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::dim(
            "adam_step",
            format!("state tracks {} groups, got {}", state.m.len(), params.len()),
        ));
    }
    for (i, p) in params.iter().enumerate() {
        if p.grad.shape() != p.value.shape() || state.m[i].len() != p.value.len() {
            return Err(Error::Shape {
                name: p.name.clone(),
                detail: "gradient or moment shape differs from value".into(),
            });
        }
        if !p.grad.is_finite() {
            return Err(Error::non_finite(format!("gradient of {}", p.name)));
        }
    }

    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let t = state.step as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);

    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let grad = p.grad.as_slice();
        let value = p.value.as_mut_slice();
        for j in 0..value.len() {
            let g = grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            value[j] -= learn_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
