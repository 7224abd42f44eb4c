use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::sequence::SimulationSequence;

/// Splits a sequence into steps `[0, k)` and `[k, end)`.
pub fn slice_at(seq: &SimulationSequence, k: usize) -> Result<(SimulationSequence, SimulationSequence)> {
    if k == 0 || k >= seq.qoi.len() {
        return Err(Error::OutOfRange(format!(
            "split point {k} must lie in [1, {}) for sequence {}",
            seq.qoi.len(),
            seq.id
        )));
    }
    let mut input = seq.clone();
    let mut output = seq.clone();
    input.qoi = seq.qoi[..k].to_vec();
    output.qoi = seq.qoi[k..].to_vec();
    Ok((input, output))
}

/// Random-length input/output split with `k` uniform on `[min_len, max_len]`.
pub fn slice_variable_length(
    seq: &SimulationSequence,
    min_len: usize,
    max_len: usize,
    rng: &mut RngStream,
) -> Result<(SimulationSequence, SimulationSequence)> {
    check_bounds(seq.qoi.len(), min_len, max_len)?;
    let k = rng.int_inclusive(min_len, max_len);
    slice_at(seq, k)
}

pub(crate) fn check_bounds(len: usize, min_len: usize, max_len: usize) -> Result<()> {
    if min_len == 0 || min_len > max_len {
        return Err(Error::OutOfRange(format!(
            "input length bounds [{min_len}, {max_len}] are empty or start at 0"
        )));
    }
    if max_len >= len {
        return Err(Error::OutOfRange(format!(
            "input length up to {max_len} leaves no output steps in a sequence of {len}"
        )));
    }
    Ok(())
}

/// Keeps steps `0, stride, 2*stride, ...` and scales `dt` by the stride.
pub fn downsample(seq: &SimulationSequence, stride: usize) -> SimulationSequence {
    let stride = stride.max(1);
    let mut out = seq.clone();
    out.qoi = seq.qoi.iter().step_by(stride).cloned().collect();
    out.dt = seq.dt * stride as f64;
    out
}
