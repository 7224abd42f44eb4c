use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{rollout_state_transition, DenseArch, Seq2SeqArch, Seq2SeqModel, Slot, StateTransitionModel};
use crate::data::{write_atomic, Scaler};
use crate::error::{Error, Result};
use crate::json;
use crate::numerics::{Matrix, ParamGroup};

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Seq2seq,
    StateTransition,
}

/// Either trained surrogate.
#[derive(Clone, Debug, PartialEq)]
pub enum Surrogate {
    Seq2Seq(Seq2SeqModel),
    StateTransition(StateTransitionModel),
}

impl Surrogate {
    pub fn family(&self) -> Family {
        match self {
            Surrogate::Seq2Seq(_) => Family::Seq2seq,
            Surrogate::StateTransition(_) => Family::StateTransition,
        }
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        match self {
            Surrogate::Seq2Seq(m) => m.scaler.as_ref(),
            Surrogate::StateTransition(m) => m.scaler.as_ref(),
        }
    }

    pub fn params(&self) -> &[ParamGroup] {
        match self {
            Surrogate::Seq2Seq(m) => &m.params,
            Surrogate::StateTransition(m) => &m.params,
        }
    }

    /// Scaled prediction of the `horizon` steps after `observed`. The
    /// state-transition model only uses the last observed step.
    pub fn predict(&self, statics: &[f64], observed: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Surrogate::Seq2Seq(m) => m.predict(statics, observed, horizon),
            Surrogate::StateTransition(m) => {
                let y0 = observed.last().ok_or(Error::Empty("observed prefix"))?;
                rollout_state_transition(m, statics, y0, horizon)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    family: Family,
    arch: serde_json::Value,
    scaler: Option<Scaler>,
    params: BTreeMap<String, Vec<f64>>,
}

pub fn to_bytes(model: &Surrogate) -> Vec<u8> {
    let (arch, scaler) = match model {
        Surrogate::Seq2Seq(m) => (serde_json::to_value(&m.arch), &m.scaler),
        Surrogate::StateTransition(m) => (serde_json::to_value(&m.arch), &m.scaler),
    };
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        family: model.family(),
        arch: arch.expect("architecture serializes"),
        scaler: scaler.clone(),
        params: model
            .params()
            .iter()
            .map(|g| (g.name.clone(), g.value.as_slice().to_vec()))
            .collect(),
    };
    json::to_vec(&file).expect("model serializes")
}

pub fn save_model(model: &Surrogate, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load_model(path: &Path) -> Result<Surrogate> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let malformed = |detail: String| Error::Malformed {
        path: path.to_path_buf(),
        detail,
    };
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| malformed(e.to_string()))?;
    let version = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    match file.family {
        Family::Seq2seq => {
            let arch: Seq2SeqArch = serde_json::from_value(file.arch).map_err(|e| malformed(format!("arch: {e}")))?;
            let params = assemble(&arch.slots(), file.params)?;
            Ok(Surrogate::Seq2Seq(Seq2SeqModel::from_params(arch, params, file.scaler)?))
        }
        Family::StateTransition => {
            let arch: DenseArch = serde_json::from_value(file.arch).map_err(|e| malformed(format!("arch: {e}")))?;
            let params = assemble(&arch.slots(), file.params)?;
            Ok(Surrogate::StateTransition(StateTransitionModel::from_params(
                arch,
                params,
                file.scaler,
            )?))
        }
    }
}

fn assemble(slots: &[Slot], mut flat: BTreeMap<String, Vec<f64>>) -> Result<Vec<ParamGroup>> {
    let mut out = Vec::with_capacity(slots.len());
    for s in slots {
        let data = flat.remove(&s.name).ok_or_else(|| Error::Shape {
            name: s.name.clone(),
            detail: "missing from the model file".into(),
        })?;
        let found = data.len();
        let m = Matrix::from_vec(s.rows, s.cols, data).map_err(|_| Error::Shape {
            name: s.name.clone(),
            detail: format!("expected {}x{} = {} values, found {found}", s.rows, s.cols, s.rows * s.cols),
        })?;
        out.push(ParamGroup::new(s.name.clone(), m));
    }
    if let Some(extra) = flat.keys().next() {
        return Err(Error::Shape {
            name: extra.clone(),
            detail: "not part of the declared architecture".into(),
        });
    }
    Ok(out)
}
