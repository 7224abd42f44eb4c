use serde::{Deserialize, Serialize};

use super::gru::{backward_step, cell_slots, forward_step, BackwardScratch, GruCell, LatentState, StepCache, GROUPS_PER_CELL};
use super::{check_groups, check_len, init_groups, ScaledExample, Slot};
use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, ParamGroup, RngStream};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqArch {
    pub n_static: usize,
    pub qoi_dim: usize,
    pub hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
}

impl Seq2SeqArch {
    pub const DEFAULT_HIDDEN: usize = 14;
    pub const DEFAULT_LAYERS: usize = 2;

    pub fn new(n_static: usize, qoi_dim: usize, hidden: usize, layers: usize) -> Self {
        Self {
            n_static,
            qoi_dim,
            hidden,
            encoder_layers: layers,
            decoder_layers: layers,
        }
    }

    /// Two stacked cells of 14 units each side.
    pub fn diffusion(n_static: usize, qoi_dim: usize) -> Self {
        Self::new(n_static, qoi_dim, Self::DEFAULT_HIDDEN, Self::DEFAULT_LAYERS)
    }

    pub fn input_dim(&self) -> usize {
        self.n_static + self.qoi_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_layers != self.decoder_layers {
            return Err(Error::InvalidConfig(format!(
                "encoder has {} layers but decoder has {}; both sides must share one architecture",
                self.encoder_layers, self.decoder_layers
            )));
        }
        if self.encoder_layers == 0 || self.hidden == 0 || self.qoi_dim == 0 {
            return Err(Error::InvalidConfig(
                "seq2seq needs at least one layer, one hidden unit and one qoi dimension".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        for (side, layers) in [("encoder", self.encoder_layers), ("decoder", self.decoder_layers)] {
            for l in 0..layers {
                let input = if l == 0 { self.input_dim() } else { self.hidden };
                out.extend(cell_slots(&format!("{side}.{l}"), input, self.hidden));
            }
        }
        out.push(Slot::weight("proj.W".into(), self.qoi_dim, self.hidden));
        out.push(Slot::bias("proj.b".into(), self.qoi_dim));
        out
    }

    fn layers(&self) -> usize {
        self.encoder_layers
    }

    fn encoder_offset(&self, l: usize) -> usize {
        GROUPS_PER_CELL * l
    }

    fn decoder_offset(&self, l: usize) -> usize {
        GROUPS_PER_CELL * (self.encoder_layers + l)
    }

    fn head_offset(&self) -> usize {
        GROUPS_PER_CELL * (self.encoder_layers + self.decoder_layers)
    }
}

/// Stacked-GRU encoder-decoder.
///
/// The encoder runs over `(statics ∥ qoi)` vectors from zero states; its final
/// states seed the decoder, which reads `(statics ∥ previous qoi)` at every
/// step and emits the next QOI through an affine head.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqModel {
    pub arch: Seq2SeqArch,
    pub params: Vec<ParamGroup>,
    pub scaler: Option<Scaler>,
}

/// Reusable buffers for forward and backward passes.
#[derive(Clone, Debug, Default)]
pub struct Seq2SeqWorkspace {
    enc: Vec<Vec<StepCache>>,
    dec: Vec<Vec<StepCache>>,
    preds: Vec<Vec<f64>>,
    x: Vec<f64>,
    hprev: Vec<f64>,
    dh: Vec<f64>,
    dx: Vec<f64>,
    dpred: Vec<f64>,
    dpred_next: Vec<f64>,
    carry: Vec<Vec<f64>>,
    scratch: BackwardScratch,
}

fn ensure_steps(v: &mut Vec<Vec<StepCache>>, steps: usize, layers: usize) {
    if v.len() < steps {
        v.resize_with(steps, Vec::new);
    }
    for s in v.iter_mut().take(steps) {
        if s.len() < layers {
            s.resize_with(layers, StepCache::default);
        }
    }
}

impl Seq2SeqModel {
    pub fn new(arch: Seq2SeqArch, rng: &mut RngStream) -> Result<Self> {
        arch.validate()?;
        let params = init_groups(&arch.slots(), rng);
        Ok(Self {
            arch,
            params,
            scaler: None,
        })
    }

    pub fn from_params(arch: Seq2SeqArch, params: Vec<ParamGroup>, scaler: Option<Scaler>) -> Result<Self> {
        arch.validate()?;
        check_groups(&arch.slots(), &params)?;
        if let Some(s) = &scaler {
            check_len("seq2seq", "scaler", s.n_features(), arch.input_dim())?;
        }
        Ok(Self { arch, params, scaler })
    }

    fn encoder_cells(&self) -> Vec<GruCell<'_>> {
        (0..self.arch.layers())
            .map(|l| GruCell::from_groups(&self.params[self.arch.encoder_offset(l)..]))
            .collect()
    }

    fn decoder_cells(&self) -> Vec<GruCell<'_>> {
        (0..self.arch.layers())
            .map(|l| GruCell::from_groups(&self.params[self.arch.decoder_offset(l)..]))
            .collect()
    }

    fn head(&self) -> (&Matrix, &Matrix) {
        let o = self.arch.head_offset();
        (&self.params[o].value, &self.params[o + 1].value)
    }

    /// Runs the encoder over `statics ∥ steps[t]` for every `t`.
    fn encode_into(&self, statics: &[f64], steps: &[Vec<f64>], ws: &mut Seq2SeqWorkspace) {
        let layers = self.arch.layers();
        let cells = self.encoder_cells();
        ensure_steps(&mut ws.enc, steps.len(), layers);
        for (t, q) in steps.iter().enumerate() {
            for (l, cell) in cells.iter().enumerate() {
                ws.x.clear();
                if l == 0 {
                    ws.x.extend_from_slice(statics);
                    ws.x.extend_from_slice(q);
                } else {
                    ws.x.extend_from_slice(&ws.enc[t][l - 1].h);
                }
                ws.hprev.clear();
                if t == 0 {
                    ws.hprev.resize(self.arch.hidden, 0.0);
                } else {
                    ws.hprev.extend_from_slice(&ws.enc[t - 1][l].h);
                }
                forward_step(cell, &ws.x, &ws.hprev, &mut ws.enc[t][l]);
            }
        }
    }

    /// Runs the decoder for `horizon` steps; predictions land in `ws.preds`.
    /// With `latent = None` the initial states are the last encoder step in `ws`.
    #[allow(clippy::too_many_arguments)]
    fn decode_into(
        &self,
        latent: Option<&LatentState>,
        n_enc: usize,
        statics: &[f64],
        y0: &[f64],
        horizon: usize,
        teacher: Option<&[Vec<f64>]>,
        ws: &mut Seq2SeqWorkspace,
    ) {
        let layers = self.arch.layers();
        let cells = self.decoder_cells();
        let (w, b) = self.head();
        ensure_steps(&mut ws.dec, horizon, layers);
        if ws.preds.len() < horizon {
            ws.preds.resize_with(horizon, Vec::new);
        }
        for j in 0..horizon {
            for (l, cell) in cells.iter().enumerate() {
                ws.x.clear();
                if l > 0 {
                    ws.x.extend_from_slice(&ws.dec[j][l - 1].h);
                } else {
                    ws.x.extend_from_slice(statics);
                    match (j, teacher) {
                        (0, _) => ws.x.extend_from_slice(y0),
                        (_, Some(t)) => ws.x.extend_from_slice(&t[j - 1]),
                        (_, None) => ws.x.extend_from_slice(&ws.preds[j - 1]),
                    }
                }
                ws.hprev.clear();
                match (j, latent) {
                    (0, Some(lat)) => ws.hprev.extend_from_slice(&lat.layers[l]),
                    (0, None) => ws.hprev.extend_from_slice(&ws.enc[n_enc - 1][l].h),
                    _ => ws.hprev.extend_from_slice(&ws.dec[j - 1][l].h),
                }
                forward_step(cell, &ws.x, &ws.hprev, &mut ws.dec[j][l]);
            }
            let top = &ws.dec[j][layers - 1].h;
            let pred = &mut ws.preds[j];
            pred.clear();
            pred.extend((0..self.arch.qoi_dim).map(|i| b.as_slice()[i] + dot(w.row(i), top)));
        }
    }

    fn check_vectors(&self, statics: &[f64], qoi: &[f64]) -> Result<()> {
        check_len("seq2seq", "static input", statics.len(), self.arch.n_static)?;
        check_len("seq2seq", "qoi vector", qoi.len(), self.arch.qoi_dim)
    }

    /// Final encoder states after reading every input vector from zero states.
    pub fn encode(&self, inputs: &[Vec<f64>]) -> Result<LatentState> {
        if inputs.is_empty() {
            return Err(Error::Empty("encoder input sequence"));
        }
        for v in inputs {
            check_len("encode", "input vector", v.len(), self.arch.input_dim())?;
        }
        let mut ws = Seq2SeqWorkspace::default();
        self.encode_into(&[], inputs, &mut ws);
        let last = &ws.enc[inputs.len() - 1];
        let latent = LatentState {
            layers: last.iter().take(self.arch.layers()).map(|c| c.h.clone()).collect(),
        };
        if !latent.is_finite() {
            return Err(Error::non_finite("encoder latent state"));
        }
        Ok(latent)
    }

    /// Generates `horizon` QOI vectors from `latent`. Step inputs after the
    /// first come from `teacher` when given, otherwise from the previous
    /// prediction.
    pub fn decode(
        &self,
        latent: &LatentState,
        statics: &[f64],
        y0: &[f64],
        horizon: usize,
        teacher: Option<&[Vec<f64>]>,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_vectors(statics, y0)?;
        if horizon == 0 {
            return Err(Error::OutOfRange("decode horizon must be at least 1".into()));
        }
        if latent.layers.len() != self.arch.layers() || latent.layers.iter().any(|h| h.len() != self.arch.hidden) {
            return Err(Error::dim("decode", "latent state does not match the decoder stack"));
        }
        if let Some(t) = teacher {
            if t.len() < horizon {
                return Err(Error::OutOfRange(format!(
                    "teacher sequence has {} steps, shorter than the horizon {horizon}",
                    t.len()
                )));
            }
        }
        let mut ws = Seq2SeqWorkspace::default();
        self.decode_into(Some(latent), 0, statics, y0, horizon, teacher, &mut ws);
        ws.preds.truncate(horizon);
        check_finite(&ws.preds)?;
        Ok(ws.preds)
    }

    /// Encodes `statics ∥ observed[t]` and autoregressively predicts the next
    /// `horizon` steps, starting from the last observed value.
    pub fn predict(&self, statics: &[f64], observed: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
        let mut ws = Seq2SeqWorkspace::default();
        self.predict_with(statics, observed, horizon, &mut ws)
    }

    pub fn predict_with(
        &self,
        statics: &[f64],
        observed: &[Vec<f64>],
        horizon: usize,
        ws: &mut Seq2SeqWorkspace,
    ) -> Result<Vec<Vec<f64>>> {
        let y0 = observed.last().ok_or(Error::Empty("observed prefix"))?;
        for q in observed {
            self.check_vectors(statics, q)?;
        }
        if horizon == 0 {
            return Err(Error::OutOfRange("prediction horizon must be at least 1".into()));
        }
        self.encode_into(statics, observed, ws);
        self.decode_into(None, observed.len(), statics, y0, horizon, None, ws);
        let preds = ws.preds[..horizon].to_vec();
        check_finite(&preds)?;
        Ok(preds)
    }

    fn check_example(&self, ex: &ScaledExample) -> Result<()> {
        if ex.input.is_empty() {
            return Err(Error::Empty("encoder input sequence"));
        }
        if ex.target.is_empty() {
            return Err(Error::Empty("decoder target sequence"));
        }
        for q in ex.input.iter().chain(&ex.target) {
            self.check_vectors(&ex.statics, q)?;
        }
        Ok(())
    }

    fn forward_example(&self, ex: &ScaledExample, teacher_forcing: bool, ws: &mut Seq2SeqWorkspace) -> f64 {
        let y0 = ex.input.last().expect("checked non-empty");
        self.encode_into(&ex.statics, &ex.input, ws);
        let teacher = teacher_forcing.then_some(ex.target.as_slice());
        self.decode_into(None, ex.input.len(), &ex.statics, y0, ex.target.len(), teacher, ws);
        let n = (ex.target.len() * self.arch.qoi_dim) as f64;
        let mut sum = 0.0;
        for (p, t) in ws.preds.iter().zip(&ex.target) {
            for (a, b) in p.iter().zip(t) {
                sum += (a - b) * (a - b);
            }
        }
        sum / n
    }

    /// Mean squared error over every decoder step and QOI dimension.
    pub fn loss(&self, ex: &ScaledExample, teacher_forcing: bool) -> Result<f64> {
        self.check_example(ex)?;
        Ok(self.forward_example(ex, teacher_forcing, &mut Seq2SeqWorkspace::default()))
    }

    /// Loss of one example, with `weight * d(loss)/d(param)` accumulated into
    /// `grads` (aligned with `params`). Backpropagates through the full
    /// unrolled encoder and decoder, including the prediction feedback when
    /// teacher forcing is off.
    pub fn loss_and_grad(
        &self,
        ex: &ScaledExample,
        teacher_forcing: bool,
        weight: f64,
        ws: &mut Seq2SeqWorkspace,
        grads: &mut [Matrix],
    ) -> Result<f64> {
        self.check_example(ex)?;
        if grads.len() != self.params.len() {
            return Err(Error::dim("loss_and_grad", "gradient buffer does not match parameters"));
        }
        let loss = self.forward_example(ex, teacher_forcing, ws);

        let arch = &self.arch;
        let (layers, hidden, qd, ns) = (arch.layers(), arch.hidden, arch.qoi_dim, arch.n_static);
        let horizon = ex.target.len();
        let scale = 2.0 * weight / (horizon * qd) as f64;
        let (w_head, _) = self.head();
        let head = arch.head_offset();
        let enc_cells = self.encoder_cells();
        let dec_cells = self.decoder_cells();

        ws.carry.resize_with(layers, Vec::new);
        for c in ws.carry.iter_mut() {
            c.clear();
            c.resize(hidden, 0.0);
        }
        ws.dpred_next.clear();
        ws.dpred_next.resize(qd, 0.0);

        for j in (0..horizon).rev() {
            ws.dpred.clear();
            for i in 0..qd {
                ws.dpred.push((ws.preds[j][i] - ex.target[j][i]) * scale + ws.dpred_next[i]);
            }
            ws.dpred_next.iter_mut().for_each(|v| *v = 0.0);
            let top = &ws.dec[j][layers - 1].h;
            grads[head].add_outer(&ws.dpred, top);
            for (g, d) in grads[head + 1].as_mut_slice().iter_mut().zip(&ws.dpred) {
                *g += d;
            }
            ws.dh.clear();
            ws.dh.extend_from_slice(&ws.carry[layers - 1]);
            w_head.matvec_t_add(&ws.dpred, &mut ws.dh);

            for l in (0..layers).rev() {
                let input = if l == 0 { ns + qd } else { hidden };
                ws.dx.clear();
                ws.dx.resize(input, 0.0);
                let off = arch.decoder_offset(l);
                backward_step(
                    &dec_cells[l],
                    &ws.dec[j][l],
                    &ws.dh,
                    &mut grads[off..off + GROUPS_PER_CELL],
                    &mut ws.dx,
                    &mut ws.carry[l],
                    &mut ws.scratch,
                );
                if l > 0 {
                    ws.dh.clear();
                    ws.dh.extend(ws.carry[l - 1].iter().zip(&ws.dx).map(|(a, b)| a + b));
                } else if !teacher_forcing && j > 0 {
                    ws.dpred_next.copy_from_slice(&ws.dx[ns..ns + qd]);
                }
            }
        }

        for t in (0..ex.input.len()).rev() {
            ws.dh.clear();
            ws.dh.extend_from_slice(&ws.carry[layers - 1]);
            for l in (0..layers).rev() {
                let input = if l == 0 { ns + qd } else { hidden };
                ws.dx.clear();
                ws.dx.resize(input, 0.0);
                let off = arch.encoder_offset(l);
                backward_step(
                    &enc_cells[l],
                    &ws.enc[t][l],
                    &ws.dh,
                    &mut grads[off..off + GROUPS_PER_CELL],
                    &mut ws.dx,
                    &mut ws.carry[l],
                    &mut ws.scratch,
                );
                if l > 0 {
                    ws.dh.clear();
                    ws.dh.extend(ws.carry[l - 1].iter().zip(&ws.dx).map(|(a, b)| a + b));
                }
            }
        }
        Ok(loss)
    }
}

fn check_finite(preds: &[Vec<f64>]) -> Result<()> {
    for (n, p) in preds.iter().enumerate() {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("decoder prediction at step {n}")));
        }
    }
    Ok(())
}
