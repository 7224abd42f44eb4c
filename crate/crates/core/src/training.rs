//! Mini-batch training: full backpropagation through time for the
//! encoder-decoder, one-step regression for the state-transition network.
//! Both use Adam and seeded shuffling, and are bitwise reproducible for a
//! given seed, data set and configuration whatever the thread count.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{slice_at, slice_variable_length, streams, Scaler};
use crate::diffusion::{simulate_with_id, DiffusionConfig};
use crate::error::{Error, Result};
use crate::models::{
    DenseArch, DenseWorkspace, Family, ScaledExample, Seq2SeqArch, Seq2SeqModel, Seq2SeqWorkspace, StateTransitionModel,
};
use crate::numerics::{adam_step, grad_check_by_group, AdamState, GroupDeviation, Matrix, ParamGroup, RngStream};
use crate::sequence::SimulationSequence;

/// How each training sequence is cut into encoder input and decoder target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputMode {
    /// Input is step 0 only.
    InitialOnly,
    /// Input length drawn uniformly from `[min_len, max_len]`, redrawn every epoch.
    Variable { min_len: usize, max_len: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learn_rate: f64,
    /// Sequences per batch for the encoder-decoder, transitions per batch
    /// for the state-transition model.
    pub batch_size: usize,
    pub n_epochs: usize,
    pub seed: u64,
    pub teacher_forcing: bool,
    /// Epochs between progress reports.
    pub report_every: usize,
    pub input_mode: InputMode,
    pub hidden_units: usize,
    pub layers: usize,
    pub dense_widths: Vec<usize>,
}

impl TrainConfig {
    /// Diffusion encoder-decoder row of the hyperparameter table.
    pub fn seq2seq_default() -> Self {
        Self {
            learn_rate: 1e-3,
            batch_size: 20,
            n_epochs: 3000,
            seed: 0,
            teacher_forcing: true,
            report_every: 50,
            input_mode: InputMode::InitialOnly,
            hidden_units: Seq2SeqArch::DEFAULT_HIDDEN,
            layers: Seq2SeqArch::DEFAULT_LAYERS,
            dense_widths: vec![4, 8, 13],
        }
    }

    /// Diffusion state-transition row of the hyperparameter table.
    pub fn state_transition_default() -> Self {
        Self {
            learn_rate: 6e-3,
            batch_size: 4000,
            n_epochs: 400,
            report_every: 10,
            ..Self::seq2seq_default()
        }
    }

    /// Overlays the keys of a JSON object onto `self`. Unknown keys are rejected.
    pub fn merged_with_json(&self, text: &str) -> Result<Self> {
        let overlay: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("training config: {e}")))?;
        let serde_json::Value::Object(overlay) = overlay else {
            return Err(Error::InvalidConfig("training config must be a JSON object".into()));
        };
        let mut base = serde_json::to_value(self).expect("config serializes");
        let obj = base.as_object_mut().expect("config is an object");
        for (k, v) in overlay {
            if !obj.contains_key(&k) {
                return Err(Error::InvalidConfig(format!("unknown training config key `{k}`")));
            }
            obj.insert(k, v);
        }
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::InvalidConfig(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what} must be positive")));
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return bad("learn_rate");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.n_epochs == 0 {
            return bad("n_epochs");
        }
        if self.report_every == 0 {
            return bad("report_every");
        }
        if self.hidden_units == 0 || self.layers == 0 {
            return bad("hidden_units and layers");
        }
        if self.dense_widths.contains(&0) {
            return bad("every dense width");
        }
        if let InputMode::Variable { min_len, max_len } = self.input_mode {
            if min_len == 0 || min_len > max_len {
                return Err(Error::InvalidConfig(format!(
                    "variable input lengths [{min_len}, {max_len}] are empty or start at 0"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
}

/// Per-epoch mean training loss and wall-clock time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.epochs {
            out.serialize(e).map_err(|e| Error::InvalidConfig(format!("history csv: {e}")))?;
        }
        out.flush().map_err(|e| Error::io("<history csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Splits a sequence into encoder input and decoder target.
pub fn make_training_pairs(
    seq: &SimulationSequence,
    mode: InputMode,
    rng: &mut RngStream,
) -> Result<(SimulationSequence, SimulationSequence)> {
    match mode {
        InputMode::InitialOnly => slice_at(seq, 1),
        InputMode::Variable { min_len, max_len } => slice_variable_length(seq, min_len, max_len, rng),
    }
}

/// Scaled example from an already-scaled sequence cut at `k`.
pub fn example_at(scaled: &SimulationSequence, k: usize) -> Result<ScaledExample> {
    let (input, target) = slice_at(scaled, k)?;
    Ok(ScaledExample {
        statics: scaled.static_values(),
        input: input.qoi,
        target: target.qoi,
    })
}

fn check_training_set(train: &[SimulationSequence]) -> Result<()> {
    let first = train.first().ok_or(Error::Empty("training set"))?;
    for s in train {
        if s.qoi_dim != first.qoi_dim || s.params.len() != first.params.len() {
            return Err(Error::dim(
                "training set",
                format!(
                    "sequence {} has {} params and qoi_dim {}, sequence {} has {} and {}",
                    s.id,
                    s.params.len(),
                    s.qoi_dim,
                    first.id,
                    first.params.len(),
                    first.qoi_dim
                ),
            ));
        }
        if s.len() < 2 {
            return Err(Error::OutOfRange(format!("sequence {} has fewer than 2 steps", s.id)));
        }
    }
    Ok(())
}

fn scale_all(train: &[SimulationSequence]) -> Result<(Scaler, Vec<SimulationSequence>)> {
    check_training_set(train)?;
    let scaler = Scaler::fit(train)?;
    let scaled = train.iter().map(|s| scaler.apply(s)).collect::<Result<Vec<_>>>()?;
    Ok((scaler, scaled))
}

fn install_grads(params: &mut [ParamGroup], grads: Vec<Matrix>) {
    for (p, g) in params.iter_mut().zip(grads) {
        p.grad = g;
    }
}

fn sum_in_order(parts: Vec<(f64, Vec<Matrix>)>) -> (f64, Vec<Matrix>) {
    let mut it = parts.into_iter();
    let (mut loss, mut total) = it.next().expect("non-empty batch");
    for (l, g) in it {
        loss += l;
        for (t, m) in total.iter_mut().zip(&g) {
            t.add_assign(m);
        }
    }
    (loss, total)
}

/// Loss and `weight`-scaled gradient summed over a batch of encoder-decoder
/// examples. Per-example work may run in parallel; the reduction follows
/// batch order so the result does not depend on the thread count.
pub fn seq2seq_batch_gradient(
    model: &Seq2SeqModel,
    batch: &[&ScaledExample],
    teacher_forcing: bool,
) -> Result<(f64, Vec<Matrix>)> {
    let weight = 1.0 / batch.len() as f64;
    let parts = batch
        .par_iter()
        .map_init(Seq2SeqWorkspace::default, |ws, ex| {
            let mut g = crate::models::zero_grads(&model.params);
            let l = model.loss_and_grad(ex, teacher_forcing, weight, ws, &mut g)?;
            Ok((l, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sum, grads) = sum_in_order(parts);
    Ok((sum * weight, grads))
}

/// Mean per-example loss over `examples` visited in `order`, batch by batch,
/// with parameters held fixed.
pub fn seq2seq_epoch_loss(
    model: &Seq2SeqModel,
    examples: &[ScaledExample],
    order: &[usize],
    batch_size: usize,
    teacher_forcing: bool,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in order.chunks(batch_size.max(1)) {
        let losses = chunk
            .par_iter()
            .map(|&i| model.loss(&examples[i], teacher_forcing))
            .collect::<Result<Vec<_>>>()?;
        let batch_mean = losses.iter().sum::<f64>() / chunk.len() as f64;
        total += batch_mean * chunk.len() as f64;
    }
    Ok(total / order.len() as f64)
}

fn draw_examples(scaled: &[SimulationSequence], mode: InputMode, rng: &mut RngStream) -> Result<Vec<ScaledExample>> {
    scaled
        .iter()
        .map(|s| {
            let (input, target) = make_training_pairs(s, mode, rng)?;
            Ok(ScaledExample {
                statics: s.static_values(),
                input: input.qoi,
                target: target.qoi,
            })
        })
        .collect()
}

/// Trains a fresh encoder-decoder. `on_epoch` sees every epoch record as it
/// completes.
pub fn train_seq2seq_with(
    train: &[SimulationSequence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Seq2SeqModel, TrainHistory)> {
    cfg.validate()?;
    let (scaler, scaled) = scale_all(train)?;
    let arch = Seq2SeqArch::new(scaled[0].params.len(), scaled[0].qoi_dim, cfg.hidden_units, cfg.layers);
    let mut model = Seq2SeqModel::new(arch, &mut RngStream::new(cfg.seed, streams::INIT))?;
    let mut adam = AdamState::new(&model.params);
    let mut shuffle = RngStream::new(cfg.seed, streams::SHUFFLE);
    let mut slicing = RngStream::new(cfg.seed, streams::SLICING);
    let fixed = match cfg.input_mode {
        InputMode::InitialOnly => Some(draw_examples(&scaled, cfg.input_mode, &mut slicing)?),
        InputMode::Variable { .. } => None,
    };

    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..scaled.len()).collect();
    for epoch in 1..=cfg.n_epochs {
        let started = Instant::now();
        let drawn;
        let examples = match &fixed {
            Some(e) => e,
            None => {
                drawn = draw_examples(&scaled, cfg.input_mode, &mut slicing)?;
                &drawn
            }
        };
        shuffle.shuffle(&mut order);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&ScaledExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, grads) = seq2seq_batch_gradient(&model, &batch, cfg.teacher_forcing)?;
            if !loss.is_finite() {
                return Err(Error::non_finite(format!("training loss at epoch {epoch}, batch {}", b + 1)));
            }
            install_grads(&mut model.params, grads);
            adam_step(&mut model.params, &mut adam, cfg.learn_rate)?;
            total += loss * chunk.len() as f64;
        }
        let record = EpochRecord {
            epoch,
            loss: total / scaled.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    for p in model.params.iter_mut() {
        p.zero_grad();
    }
    model.scaler = Some(scaler);
    Ok((model, history))
}

pub fn train_seq2seq(train: &[SimulationSequence], cfg: &TrainConfig) -> Result<(Seq2SeqModel, TrainHistory)> {
    train_seq2seq_with(train, cfg, |_| {})
}

/// One-step transitions `(statics ∥ qoi_t) -> qoi_{t+1}` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Transitions {
    pub input_dim: usize,
    pub qoi_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Transitions {
    pub fn len(&self) -> usize {
        self.targets.len() / self.qoi_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.qoi_dim..(i + 1) * self.qoi_dim]
    }
}

/// Every consecutive pair of steps of every sequence, in sequence order.
pub fn explode_transitions(seqs: &[SimulationSequence]) -> Transitions {
    let qoi_dim = seqs.first().map_or(0, |s| s.qoi_dim);
    let input_dim = seqs.first().map_or(0, |s| s.params.len()) + qoi_dim;
    let count: usize = seqs.iter().map(|s| s.len().saturating_sub(1)).sum();
    let mut inputs = Vec::with_capacity(count * input_dim);
    let mut targets = Vec::with_capacity(count * qoi_dim);
    for s in seqs {
        let statics = s.static_values();
        for w in s.qoi.windows(2) {
            inputs.extend_from_slice(&statics);
            inputs.extend_from_slice(&w[0]);
            targets.extend_from_slice(&w[1]);
        }
    }
    Transitions {
        input_dim,
        qoi_dim,
        inputs,
        targets,
    }
}

// Fixed chunking keeps the reduction order independent of the thread count.
const TRANSITION_CHUNK: usize = 256;

/// Loss and gradient of the mean one-step error over the transitions in `idx`.
pub fn transition_batch_gradient(
    model: &StateTransitionModel,
    data: &Transitions,
    idx: &[usize],
) -> (f64, Vec<Matrix>) {
    let weight = 1.0 / idx.len() as f64;
    let parts: Vec<(f64, Vec<Matrix>)> = idx
        .par_chunks(TRANSITION_CHUNK)
        .map(|chunk| {
            let mut ws = DenseWorkspace::default();
            let mut g = crate::models::zero_grads(&model.params);
            let mut loss = 0.0;
            for &i in chunk {
                loss += model.accumulate_grad(data.input(i), data.target(i), weight, &mut ws, &mut g);
            }
            (loss, g)
        })
        .collect();
    let (sum, grads) = sum_in_order(parts);
    (sum * weight, grads)
}

pub fn train_state_transition_with(
    train: &[SimulationSequence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(StateTransitionModel, TrainHistory)> {
    cfg.validate()?;
    let (scaler, scaled) = scale_all(train)?;
    let arch = DenseArch {
        n_static: scaled[0].params.len(),
        qoi_dim: scaled[0].qoi_dim,
        hidden: cfg.dense_widths.clone(),
    };
    let mut model = StateTransitionModel::new(arch, &mut RngStream::new(cfg.seed, streams::INIT))?;
    let data = explode_transitions(&scaled);
    let mut adam = AdamState::new(&model.params);
    let mut shuffle = RngStream::new(cfg.seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.n_epochs {
        let started = Instant::now();
        shuffle.shuffle(&mut order);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = transition_batch_gradient(&model, &data, chunk);
            if !loss.is_finite() {
                return Err(Error::non_finite(format!("training loss at epoch {epoch}, batch {}", b + 1)));
            }
            install_grads(&mut model.params, grads);
            adam_step(&mut model.params, &mut adam, cfg.learn_rate)?;
            total += loss * chunk.len() as f64;
        }
        let record = EpochRecord {
            epoch,
            loss: total / data.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    for p in model.params.iter_mut() {
        p.zero_grad();
    }
    model.scaler = Some(scaler);
    Ok((model, history))
}

pub fn train_state_transition(
    train: &[SimulationSequence],
    cfg: &TrainConfig,
) -> Result<(StateTransitionModel, TrainHistory)> {
    train_state_transition_with(train, cfg, |_| {})
}

/// Finite-difference check of the training gradient of either family at
/// its default architecture, on two short coarse diffusion runs (10 steps
/// each, initial-condition input, teacher forcing on).
pub fn toy_gradient_check(family: Family, seed: u64, probe_eps: f64) -> Result<Vec<GroupDeviation>> {
    let seqs = [(1.3, 0), (2.6, 1)]
        .iter()
        .map(|&(d, id)| simulate_with_id(&DiffusionConfig::new(d, 0.05, 1e-3, 9), id))
        .collect::<Result<Vec<_>>>()?;
    let (_, scaled) = scale_all(&seqs)?;
    let mut rng = RngStream::new(seed, streams::INIT);
    match family {
        Family::Seq2seq => {
            let arch = Seq2SeqArch::diffusion(2, 1);
            let mut model = Seq2SeqModel::new(arch.clone(), &mut rng)?;
            let examples = scaled.iter().map(|s| example_at(s, 1)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&ScaledExample> = examples.iter().collect();
            let (_, grads) = seq2seq_batch_gradient(&model, &refs, true)?;
            install_grads(&mut model.params, grads);
            let loss = |p: &[ParamGroup]| {
                let m = Seq2SeqModel {
                    arch: arch.clone(),
                    params: p.to_vec(),
                    scaler: None,
                };
                examples.iter().map(|e| m.loss(e, true).unwrap_or(f64::NAN)).sum::<f64>() / examples.len() as f64
            };
            Ok(grad_check_by_group(loss, &mut model.params, probe_eps))
        }
        Family::StateTransition => {
            let arch = DenseArch::diffusion(2, 1);
            let mut model = StateTransitionModel::new(arch.clone(), &mut rng)?;
            let data = explode_transitions(&scaled);
            let idx: Vec<usize> = (0..data.len()).collect();
            // The first transition's scaled input is all zeros, which with zero
            // biases puts every hidden unit exactly on its relu kink, where the
            // central difference sees half a slope. Nudging the biases moves
            // the check point off it.
            for g in model.params.iter_mut().filter(|g| g.name.ends_with(".b")) {
                g.value.fill(0.05);
            }
            let (_, grads) = transition_batch_gradient(&model, &data, &idx);
            install_grads(&mut model.params, grads);
            let loss = |p: &[ParamGroup]| {
                let m = StateTransitionModel {
                    arch: arch.clone(),
                    params: p.to_vec(),
                    scaler: None,
                };
                idx.iter().map(|&i| m.transition_loss(data.input(i), data.target(i))).sum::<f64>() / idx.len() as f64
            };
            Ok(grad_check_by_group(loss, &mut model.params, probe_eps))
        }
    }
}
