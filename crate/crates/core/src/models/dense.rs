use serde::{Deserialize, Serialize};

use super::{check_groups, check_len, init_groups, Slot};
use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, ParamGroup, RngStream};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseArch {
    pub n_static: usize,
    pub qoi_dim: usize,
    pub hidden: Vec<usize>,
}

impl DenseArch {
    /// Hidden widths 4, 8, 13.
    pub fn diffusion(n_static: usize, qoi_dim: usize) -> Self {
        Self {
            n_static,
            qoi_dim,
            hidden: vec![4, 8, 13],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.n_static + self.qoi_dim
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim());
        w.extend(&self.hidden);
        w.push(self.qoi_dim);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths().contains(&0) {
            return Err(Error::InvalidConfig("dense layer widths must all be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn slots(&self) -> Vec<Slot> {
        let w = self.widths();
        let mut out = Vec::new();
        for i in 0..w.len() - 1 {
            out.push(Slot::weight(format!("layer.{i}.W"), w[i + 1], w[i]));
            out.push(Slot::bias(format!("layer.{i}.b"), w[i + 1]));
        }
        out
    }
}

/// Feed-forward map `(statics ∥ qoi_t) -> qoi_{t+1}` with relu hidden layers
/// and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTransitionModel {
    pub arch: DenseArch,
    pub params: Vec<ParamGroup>,
    pub scaler: Option<Scaler>,
}

#[derive(Clone, Debug, Default)]
pub struct DenseWorkspace {
    // act[0] is the input, act[i + 1] the output of layer i
    act: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl StateTransitionModel {
    pub fn new(arch: DenseArch, rng: &mut RngStream) -> Result<Self> {
        arch.validate()?;
        let params = init_groups(&arch.slots(), rng);
        Ok(Self {
            arch,
            params,
            scaler: None,
        })
    }

    pub fn from_params(arch: DenseArch, params: Vec<ParamGroup>, scaler: Option<Scaler>) -> Result<Self> {
        arch.validate()?;
        check_groups(&arch.slots(), &params)?;
        if let Some(s) = &scaler {
            check_len("state_transition", "scaler", s.n_features(), arch.input_dim())?;
        }
        Ok(Self { arch, params, scaler })
    }

    fn n_layers(&self) -> usize {
        self.params.len() / 2
    }

    /// Forward pass into `ws`; returns the output slice.
    pub(crate) fn forward_into<'w>(&self, x: &[f64], ws: &'w mut DenseWorkspace) -> &'w [f64] {
        let n = self.n_layers();
        ws.act.resize_with(n + 1, Vec::new);
        ws.act[0].clear();
        ws.act[0].extend_from_slice(x);
        for i in 0..n {
            let (w, b) = (&self.params[2 * i].value, &self.params[2 * i + 1].value);
            let (head, tail) = ws.act.split_at_mut(i + 1);
            let (input, out) = (&head[i], &mut tail[0]);
            out.clear();
            for r in 0..w.rows() {
                let a = b.as_slice()[r] + dot(w.row(r), input);
                out.push(if i + 1 < n { a.max(0.0) } else { a });
            }
        }
        &ws.act[n]
    }

    /// Squared error of one transition averaged over QOI dimensions, with
    /// `weight * gradient` accumulated into `grads`.
    pub fn accumulate_grad(
        &self,
        x: &[f64],
        target: &[f64],
        weight: f64,
        ws: &mut DenseWorkspace,
        grads: &mut [Matrix],
    ) -> f64 {
        let n = self.n_layers();
        let qd = target.len() as f64;
        self.forward_into(x, ws);
        ws.delta.clear();
        let mut loss = 0.0;
        for (o, t) in ws.act[n].iter().zip(target) {
            loss += (o - t) * (o - t);
            ws.delta.push(2.0 * (o - t) / qd * weight);
        }
        for i in (0..n).rev() {
            grads[2 * i].add_outer(&ws.delta, &ws.act[i]);
            for (g, d) in grads[2 * i + 1].as_mut_slice().iter_mut().zip(&ws.delta) {
                *g += d;
            }
            if i > 0 {
                ws.next.clear();
                ws.next.resize(ws.act[i].len(), 0.0);
                self.params[2 * i].value.matvec_t_add(&ws.delta, &mut ws.next);
                // act[i] > 0 exactly where the relu was active
                for (d, a) in ws.next.iter_mut().zip(&ws.act[i]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                std::mem::swap(&mut ws.delta, &mut ws.next);
            }
        }
        loss / qd
    }

    /// Mean one-step squared error over transitions, without gradients.
    pub fn transition_loss(&self, x: &[f64], target: &[f64]) -> f64 {
        let mut ws = DenseWorkspace::default();
        let out = self.forward_into(x, &mut ws);
        out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / target.len() as f64
    }
}

pub fn dense_forward(model: &StateTransitionModel, x: &[f64]) -> Result<Vec<f64>> {
    check_len("dense_forward", "input", x.len(), model.arch.input_dim())?;
    let mut ws = DenseWorkspace::default();
    Ok(model.forward_into(x, &mut ws).to_vec())
}

/// Iterates the transition map from `y0`, feeding each prediction back in.
pub fn rollout_state_transition(
    model: &StateTransitionModel,
    statics: &[f64],
    y0: &[f64],
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    check_len("rollout", "static input", statics.len(), model.arch.n_static)?;
    check_len("rollout", "initial qoi", y0.len(), model.arch.qoi_dim)?;
    if horizon == 0 {
        return Err(Error::OutOfRange("rollout horizon must be at least 1".into()));
    }
    let mut ws = DenseWorkspace::default();
    let mut x = statics.to_vec();
    x.extend_from_slice(y0);
    let ns = statics.len();
    let mut out = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let y = model.forward_into(&x, &mut ws);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("state-transition rollout at step {}", step + 1)));
        }
        x[ns..].copy_from_slice(y);
        out.push(y.to_vec());
    }
    Ok(out)
}
