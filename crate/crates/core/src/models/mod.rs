//! Surrogate families: a stacked-GRU encoder-decoder and a dense
//! state-transition network, both operating on min-max scaled values.

mod dense;
mod gru;
mod io;
mod seq2seq;

pub use dense::{dense_forward, rollout_state_transition, DenseArch, DenseWorkspace, StateTransitionModel};
pub use gru::{
    backward_step, forward_step, gru_cell_forward, init_cell_groups, stacked_forward, BackwardScratch, GruCell,
    GruCellParams, LatentState, StepCache, GROUPS_PER_CELL,
};
pub use io::{load_model, save_model, to_bytes, Family, Surrogate, MODEL_FORMAT_VERSION};
pub use seq2seq::{Seq2SeqArch, Seq2SeqModel, Seq2SeqWorkspace};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamGroup, RngStream};

/// One training or evaluation example in scaled space: static parameters,
/// the observed QOI prefix and the QOI steps that follow it.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledExample {
    pub statics: Vec<f64>,
    pub input: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
}

/// Name and shape of one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Slot {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub weight: bool,
}

impl Slot {
    pub fn weight(name: String, rows: usize, cols: usize) -> Self {
        Self {
            name,
            rows,
            cols,
            weight: true,
        }
    }

    pub fn bias(name: String, rows: usize) -> Self {
        Self {
            name,
            rows,
            cols: 1,
            weight: false,
        }
    }
}

/// Weights uniform on `±sqrt(6 / (fan_in + fan_out))`, biases zero.
pub(crate) fn init_groups(slots: &[Slot], rng: &mut RngStream) -> Vec<ParamGroup> {
    slots
        .iter()
        .map(|s| {
            let mut m = Matrix::zeros(s.rows, s.cols);
            if s.weight {
                let limit = (6.0 / (s.rows + s.cols) as f64).sqrt();
                for v in m.as_mut_slice() {
                    *v = limit * (2.0 * rng.uniform() - 1.0);
                }
            }
            ParamGroup::new(s.name.clone(), m)
        })
        .collect()
}

pub(crate) fn check_groups(slots: &[Slot], groups: &[ParamGroup]) -> Result<()> {
    if slots.len() != groups.len() {
        return Err(Error::Shape {
            name: "params".into(),
            detail: format!("expected {} groups, found {}", slots.len(), groups.len()),
        });
    }
    for (s, g) in slots.iter().zip(groups) {
        if s.name != g.name {
            return Err(Error::Shape {
                name: g.name.clone(),
                detail: format!("expected group {} at this position", s.name),
            });
        }
        if g.value.shape() != (s.rows, s.cols) || g.grad.shape() != (s.rows, s.cols) {
            return Err(Error::Shape {
                name: g.name.clone(),
                detail: format!("expected {}x{}, found {:?}", s.rows, s.cols, g.value.shape()),
            });
        }
        if !g.value.is_finite() {
            return Err(Error::non_finite(format!("parameter group {}", g.name)));
        }
    }
    Ok(())
}

pub(crate) fn zero_grads(params: &[ParamGroup]) -> Vec<Matrix> {
    params.iter().map(|g| Matrix::zeros(g.value.rows(), g.value.cols())).collect()
}

fn check_len(op: &'static str, what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::dim(op, format!("{what} has {got} entries, model expects {want}")));
    }
    Ok(())
}
