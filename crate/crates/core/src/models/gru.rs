//! GRU cell with the update gate weighting the previous state:
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)
//! r  = sigmoid(W_r x + U_r h + b_r)
//! h~ = tanh(W_h x + U_h (r * h) + b_h)
//! h' = z * h + (1 - z) * h~
//! ```

use crate::error::{Error, Result};
use super::{init_groups, Slot};
use crate::numerics::{dot, sigmoid, Matrix, ParamGroup, RngStream};

pub const GATE_Z: usize = 0;
pub const GATE_R: usize = 1;
pub const GATE_H: usize = 2;

/// Groups per cell, ordered `W_z U_z b_z W_r U_r b_r W_h U_h b_h`.
pub const GROUPS_PER_CELL: usize = 9;

const GATE_NAMES: [&str; 3] = ["z", "r", "h"];

/// Owned parameters of one GRU cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCellParams {
    pub w: [Matrix; 3],
    pub u: [Matrix; 3],
    pub b: [Matrix; 3],
}

impl GruCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: std::array::from_fn(|_| Matrix::zeros(hidden, input)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| Matrix::zeros(hidden, 1)),
        }
    }

    /// Every weight and bias set to `value`.
    pub fn filled(input: usize, hidden: usize, value: f64) -> Self {
        let mut p = Self::zeros(input, hidden);
        for m in p.w.iter_mut().chain(p.u.iter_mut()).chain(p.b.iter_mut()) {
            m.fill(value);
        }
        p
    }

    pub fn view(&self) -> GruCell<'_> {
        GruCell {
            w: [&self.w[0], &self.w[1], &self.w[2]],
            u: [&self.u[0], &self.u[1], &self.u[2]],
            b: [&self.b[0], &self.b[1], &self.b[2]],
        }
    }

    pub fn to_groups(&self, prefix: &str) -> Vec<ParamGroup> {
        cell_slots(prefix, self.w[0].cols(), self.u[0].rows())
            .into_iter()
            .enumerate()
            .map(|(i, slot)| {
                let (gate, kind) = (i / 3, i % 3);
                let m = [&self.w, &self.u, &self.b][kind][gate].clone();
                ParamGroup::new(slot.name, m)
            })
            .collect()
    }

    pub fn from_groups(groups: &[ParamGroup]) -> Self {
        let c = GruCell::from_groups(groups);
        Self {
            w: c.w.map(|m| m.clone()),
            u: c.u.map(|m| m.clone()),
            b: c.b.map(|m| m.clone()),
        }
    }
}

/// Slot layout of one cell named under `prefix`, in group order.
pub(crate) fn cell_slots(prefix: &str, input: usize, hidden: usize) -> Vec<Slot> {
    let mut out = Vec::with_capacity(GROUPS_PER_CELL);
    for gate in GATE_NAMES {
        out.push(Slot::weight(format!("{prefix}.W_{gate}"), hidden, input));
        out.push(Slot::weight(format!("{prefix}.U_{gate}"), hidden, hidden));
        out.push(Slot::bias(format!("{prefix}.b_{gate}"), hidden));
    }
    out
}

/// Glorot-uniform weights, zero biases, as parameter groups named under `prefix`.
pub fn init_cell_groups(prefix: &str, input: usize, hidden: usize, rng: &mut RngStream) -> Vec<ParamGroup> {
    init_groups(&cell_slots(prefix, input, hidden), rng)
}

/// Borrowed view of one cell's parameters.
#[derive(Clone, Copy, Debug)]
pub struct GruCell<'a> {
    pub w: [&'a Matrix; 3],
    pub u: [&'a Matrix; 3],
    pub b: [&'a Matrix; 3],
}

impl<'a> GruCell<'a> {
    pub fn from_groups(groups: &'a [ParamGroup]) -> Self {
        debug_assert!(groups.len() >= GROUPS_PER_CELL);
        let at = |i: usize| &groups[i].value;
        Self {
            w: [at(0), at(3), at(6)],
            u: [at(1), at(4), at(7)],
            b: [at(2), at(5), at(8)],
        }
    }

    pub fn hidden(&self) -> usize {
        self.u[0].rows()
    }

    pub fn input(&self) -> usize {
        self.w[0].cols()
    }

    pub fn check(&self) -> Result<()> {
        let (n, m) = (self.hidden(), self.input());
        for g in 0..3 {
            if self.w[g].shape() != (n, m) || self.u[g].shape() != (n, n) || self.b[g].shape() != (n, 1) {
                return Err(Error::dim("gru cell", format!("gate {} has inconsistent shapes", GATE_NAMES[g])));
            }
        }
        Ok(())
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug, Default)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub rh: Vec<f64>,
    pub cand: Vec<f64>,
    pub h: Vec<f64>,
}

impl StepCache {
    fn prepare(&mut self, x: &[f64], h_prev: &[f64]) {
        let n = h_prev.len();
        self.x.clear();
        self.x.extend_from_slice(x);
        self.h_prev.clear();
        self.h_prev.extend_from_slice(h_prev);
        for v in [&mut self.z, &mut self.r, &mut self.rh, &mut self.cand, &mut self.h] {
            v.resize(n, 0.0);
        }
    }
}

/// One step, recording intermediates into `c`. The new state is `c.h`.
#[inline]
pub fn forward_step(cell: &GruCell<'_>, x: &[f64], h_prev: &[f64], c: &mut StepCache) {
    c.prepare(x, h_prev);
    let n = h_prev.len();
    let [wz, wr, wh] = cell.w;
    let [uz, ur, uh] = cell.u;
    let [bz, br, bh] = cell.b;
    for i in 0..n {
        let az = bz.as_slice()[i] + dot(wz.row(i), x) + dot(uz.row(i), h_prev);
        let ar = br.as_slice()[i] + dot(wr.row(i), x) + dot(ur.row(i), h_prev);
        c.z[i] = sigmoid(az);
        c.r[i] = sigmoid(ar);
        c.rh[i] = c.r[i] * h_prev[i];
    }
    for i in 0..n {
        let ah = bh.as_slice()[i] + dot(wh.row(i), x) + dot(uh.row(i), &c.rh);
        let cand = ah.tanh();
        c.cand[i] = cand;
        c.h[i] = c.z[i] * h_prev[i] + (1.0 - c.z[i]) * cand;
    }
}

/// Scratch buffers for [`backward_step`].
#[derive(Clone, Debug, Default)]
pub struct BackwardScratch {
    da: [Vec<f64>; 3],
    drh: Vec<f64>,
}

/// Backpropagates `dh` (gradient w.r.t. `c.h`) through one step.
///
/// `grads` holds the cell's nine gradient matrices in group order and is
/// accumulated into; `dx` is accumulated into; `dh_prev` is overwritten.
#[inline]
pub fn backward_step(
    cell: &GruCell<'_>,
    c: &StepCache,
    dh: &[f64],
    grads: &mut [Matrix],
    dx: &mut [f64],
    dh_prev: &mut [f64],
    s: &mut BackwardScratch,
) {
    let n = dh.len();
    for v in s.da.iter_mut() {
        v.resize(n, 0.0);
    }
    s.drh.clear();
    s.drh.resize(n, 0.0);

    for i in 0..n {
        let z = c.z[i];
        let cand = c.cand[i];
        let dz = dh[i] * (c.h_prev[i] - cand);
        let dcand = dh[i] * (1.0 - z);
        dh_prev[i] = dh[i] * z;
        s.da[GATE_H][i] = dcand * (1.0 - cand * cand);
        s.da[GATE_Z][i] = dz * z * (1.0 - z);
    }
    // candidate gate sees r * h
    cell.u[GATE_H].matvec_t_add(&s.da[GATE_H], &mut s.drh);
    for i in 0..n {
        let r = c.r[i];
        let dr = s.drh[i] * c.h_prev[i];
        dh_prev[i] += s.drh[i] * r;
        s.da[GATE_R][i] = dr * r * (1.0 - r);
    }

    for g in 0..3 {
        let da = &s.da[g];
        grads[3 * g].add_outer(da, &c.x);
        let hin = if g == GATE_H { &c.rh } else { &c.h_prev };
        grads[3 * g + 1].add_outer(da, hin);
        for (gb, d) in grads[3 * g + 2].as_mut_slice().iter_mut().zip(da) {
            *gb += d;
        }
        cell.w[g].matvec_t_add(da, dx);
        if g != GATE_H {
            cell.u[g].matvec_t_add(da, dh_prev);
        }
    }
}

/// Single GRU step without caching.
pub fn gru_cell_forward(cell: &GruCellParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let view = cell.view();
    view.check()?;
    if x.len() != view.input() || h_prev.len() != view.hidden() {
        return Err(Error::dim(
            "gru_cell_forward",
            format!(
                "x has {} entries (cell expects {}), h_prev has {} (cell expects {})",
                x.len(),
                view.input(),
                h_prev.len(),
                view.hidden()
            ),
        ));
    }
    let mut c = StepCache::default();
    forward_step(&view, x, h_prev, &mut c);
    Ok(c.h)
}

/// One hidden vector per stacked layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub layers: Vec<Vec<f64>>,
}

impl LatentState {
    pub fn zeros(layers: usize, hidden: usize) -> Self {
        Self {
            layers: vec![vec![0.0; hidden]; layers],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().all(|v| v.is_finite())
    }
}

/// Runs one step through a stack: layer 0 reads `x`, layer `k` reads layer
/// `k - 1`'s new state. Returns the top output and the new states.
pub fn stacked_forward(layers: &[GruCell<'_>], x: &[f64], states: &LatentState) -> Result<(Vec<f64>, LatentState)> {
    if layers.len() != states.layers.len() || layers.is_empty() {
        return Err(Error::dim(
            "stacked_forward",
            format!("{} layers but {} states", layers.len(), states.layers.len()),
        ));
    }
    let mut input = x.to_vec();
    let mut next = Vec::with_capacity(layers.len());
    let mut cache = StepCache::default();
    for (cell, h) in layers.iter().zip(&states.layers) {
        cell.check()?;
        if input.len() != cell.input() || h.len() != cell.hidden() {
            return Err(Error::dim(
                "stacked_forward",
                format!("layer input {} / state {} vs cell {}x{}", input.len(), h.len(), cell.hidden(), cell.input()),
            ));
        }
        forward_step(cell, &input, h, &mut cache);
        input = cache.h.clone();
        next.push(cache.h.clone());
    }
    Ok((input, LatentState { layers: next }))
}
