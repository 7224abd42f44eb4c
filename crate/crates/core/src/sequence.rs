use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One simulation: its static inputs and the per-step QOI trajectory.
///
/// `qoi[0]` is the state at `t = 0`; `qoi[n]` is the state after `n` steps of
/// size `dt`. Static parameters are keyed by name and iterate in sorted
/// order, which is also the feature order used by the scaler and the models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSequence {
    pub id: u64,
    pub params: BTreeMap<String, f64>,
    pub dt: f64,
    pub qoi_dim: usize,
    pub qoi: Vec<Vec<f64>>,
}

impl SimulationSequence {
    pub fn len(&self) -> usize {
        self.qoi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qoi.is_empty()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    pub fn static_values(&self) -> Vec<f64> {
        self.params.values().copied().collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.qoi.is_empty() {
            return Err(Error::Empty("sequence qoi"));
        }
        for (n, step) in self.qoi.iter().enumerate() {
            if step.len() != self.qoi_dim {
                return Err(Error::dim(
                    "SimulationSequence",
                    format!(
                        "sequence {} step {n} has {} values, qoi_dim is {}",
                        self.id,
                        step.len(),
                        self.qoi_dim
                    ),
                ));
            }
            if step.iter().any(|v| !v.is_finite()) {
                return Err(Error::non_finite(format!("sequence {} step {n}", self.id)));
            }
        }
        if self.params.values().any(|v| !v.is_finite()) || !self.dt.is_finite() {
            return Err(Error::non_finite(format!("sequence {} metadata", self.id)));
        }
        Ok(())
    }
}
