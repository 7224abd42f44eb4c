//! Integrated absolute error, test-set reports, the input-length and
//! resolution-extrapolation studies, and the early-termination monitor.
//! Every error here is measured on min-max scaled values.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::statistics::{Data, OrderStatistics, Statistics};

use crate::data::{downsample, Scaler};
use crate::diffusion::{analytic_concentration, fit_order, sequence_params, simulate, DiffusionConfig, DiffusionRun};
use crate::error::{Error, Result};
use crate::models::Surrogate;
use crate::sequence::SimulationSequence;

/// Mean over steps of the absolute error, each step's error averaged over
/// QOI dimensions first.
pub fn iae(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim(
            "iae",
            format!("prediction has {} steps, truth has {}", pred.len(), truth.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Empty("iae sequence"));
    }
    let mut total = 0.0;
    for (n, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.len() != t.len() || p.is_empty() {
            return Err(Error::dim(
                "iae",
                format!("step {n}: prediction has {} dims, truth has {}", p.len(), t.len()),
            ));
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
    }
    Ok(total / pred.len() as f64)
}

/// Anything that can continue a scaled QOI sequence.
pub trait Predictor: Sync {
    fn name(&self) -> String;

    /// Scaled predictions for the `horizon` steps after `observed`.
    /// `id` identifies the sequence; only test stubs look at it.
    fn predict(&self, id: u64, statics: &[f64], observed: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>>;
}

impl Predictor for Surrogate {
    fn name(&self) -> String {
        match self {
            Surrogate::Seq2Seq(_) => "seq2seq".into(),
            Surrogate::StateTransition(_) => "state_transition".into(),
        }
    }

    fn predict(&self, _id: u64, statics: &[f64], observed: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
        Surrogate::predict(self, statics, observed, horizon)
    }
}

/// Test stub that replays the true scaled sequences.
#[derive(Clone, Debug, Default)]
pub struct OraclePredictor {
    truth: BTreeMap<u64, Vec<Vec<f64>>>,
}

impl OraclePredictor {
    pub fn new<'a>(scaler: &Scaler, sequences: impl IntoIterator<Item = &'a SimulationSequence>) -> Result<Self> {
        let mut truth = BTreeMap::new();
        for s in sequences {
            truth.insert(s.id, scaler.apply(s)?.qoi);
        }
        Ok(Self { truth })
    }
}

impl Predictor for OraclePredictor {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, id: u64, _statics: &[f64], observed: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
        let seq = self
            .truth
            .get(&id)
            .ok_or_else(|| Error::InvalidConfig(format!("oracle has no sequence {id}")))?;
        let k = observed.len();
        seq.get(k..k + horizon)
            .map(|s| s.to_vec())
            .ok_or_else(|| Error::OutOfRange(format!("oracle sequence {id} ends before step {}", k + horizon)))
    }
}

/// Test stub predicting the same scaled value at every step.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPredictor {
    pub value: f64,
    pub qoi_dim: usize,
}

impl Predictor for ConstantPredictor {
    fn name(&self) -> String {
        format!("constant_{}", self.value)
    }

    fn predict(&self, _id: u64, _statics: &[f64], _observed: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
        Ok(vec![vec![self.value; self.qoi_dim]; horizon])
    }
}

/// Hex SHA-256 of a byte string, used to tie reports to model files.
pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub n: usize,
}

/// Mean, median and sample standard deviation (0 for a single value).
pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Empty("values to summarize"));
    }
    let sd = if values.len() > 1 { values.std_dev() } else { 0.0 };
    Ok(SummaryStats {
        mean: values.mean(),
        median: Data::new(values.to_vec()).median(),
        sd,
        n: values.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceError {
    pub sequence_id: u64,
    pub iae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub config_digest: String,
    pub input_len: usize,
    pub per_sequence: Vec<SequenceError>,
    pub stats: SummaryStats,
}

impl EvaluationReport {
    pub fn iae_values(&self) -> Vec<f64> {
        self.per_sequence.iter().map(|r| r.iae).collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.per_sequence {
            out.serialize(r).map_err(|e| Error::InvalidConfig(format!("report csv: {e}")))?;
        }
        out.flush().map_err(|e| Error::io("<report csv>", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Scaled prediction of `seq` from its first `input_len` steps, and the
/// truth it should match.
pub fn predict_sequence(
    predictor: &dyn Predictor,
    scaler: &Scaler,
    seq: &SimulationSequence,
    input_len: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if input_len == 0 || input_len >= seq.len() {
        return Err(Error::OutOfRange(format!(
            "input length {input_len} must lie in [1, {}) for sequence {}",
            seq.len(),
            seq.id
        )));
    }
    let scaled = scaler.apply(seq)?;
    let statics = scaled.static_values();
    let (observed, truth) = scaled.qoi.split_at(input_len);
    let pred = predictor.predict(seq.id, &statics, observed, truth.len())?;
    Ok((pred, truth.to_vec()))
}

/// Per-sequence IAE of the predicted remainder after `input_len` observed
/// steps. With `input_len = 1` this is the initial-condition protocol.
pub fn evaluate_test(
    predictor: &dyn Predictor,
    scaler: &Scaler,
    test: &[SimulationSequence],
    input_len: usize,
    config_digest: &str,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let per_sequence = test
        .par_iter()
        .map(|seq| {
            let (pred, truth) = predict_sequence(predictor, scaler, seq, input_len)?;
            Ok(SequenceError {
                sequence_id: seq.id,
                iae: iae(&pred, &truth)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = per_sequence.iter().map(|r| r.iae).collect();
    Ok(EvaluationReport {
        model: predictor.name(),
        config_digest: config_digest.to_string(),
        input_len,
        stats: summarize(&values)?,
        per_sequence,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    InputLength,
    Extrapolation,
    SolverError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub x: f64,
    pub median_iae: f64,
    pub mean_iae: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyTable {
    pub kind: StudyKind,
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    fn new(kind: StudyKind, mut rows: Vec<StudyRow>) -> Self {
        rows.sort_by(|a, b| a.x.total_cmp(&b.x));
        Self { kind, rows }
    }

    pub fn xs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.x).collect()
    }

    pub fn medians(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.median_iae).collect()
    }

    pub fn row(&self, x: f64) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.x == x)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(|e| Error::InvalidConfig(format!("study csv: {e}")))?;
        }
        out.flush().map_err(|e| Error::io("<study csv>", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Test-set IAE with the encoder fed the first `L` steps, for each `L`.
pub fn input_length_study(
    predictor: &dyn Predictor,
    scaler: &Scaler,
    test: &[SimulationSequence],
    lengths: &[usize],
) -> Result<StudyTable> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let shortest = test.iter().map(|s| s.len()).min().unwrap_or(0);
    if let Some(&bad) = lengths.iter().find(|&&l| l == 0 || l >= shortest) {
        return Err(Error::OutOfRange(format!(
            "input length {bad} must lie in [1, {shortest}) for every test sequence"
        )));
    }
    let mut rows = Vec::with_capacity(lengths.len());
    for &l in lengths {
        let report = evaluate_test(predictor, scaler, test, l, "")?;
        rows.push(StudyRow {
            x: l as f64,
            median_iae: report.stats.median,
            mean_iae: report.stats.mean,
            n: report.stats.n,
        });
    }
    Ok(StudyTable::new(StudyKind::InputLength, rows))
}

/// Time grid shared by the extrapolation study's model and solver runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySetup {
    pub diffusivity: f64,
    /// Solver time step.
    pub dt: f64,
    /// Solver steps.
    pub n_steps: usize,
    /// Keep every `stride`-th solver step, as the training data did.
    pub stride: usize,
}

impl TrajectorySetup {
    /// Analytic integrated concentration at every kept step, step 0 included.
    pub fn analytic(&self) -> Vec<Vec<f64>> {
        (0..=self.n_steps)
            .step_by(self.stride.max(1))
            .map(|n| vec![analytic_concentration(self.diffusivity, n as f64 * self.dt)])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtrapolationResult {
    /// Model IAE against the analytic trajectory at each requested `dx`.
    pub model: StudyTable,
    /// Solver IAE against the analytic trajectory at each solver `dx`.
    pub solver: StudyTable,
    /// Least-squares order of the solver errors, if defined.
    pub solver_order: Option<f64>,
}

fn scaled_truth(scaler: &Scaler, offset: usize, traj: &[Vec<f64>]) -> Vec<Vec<f64>> {
    traj.iter().map(|q| scaler.apply_qoi(offset, q)).collect()
}

/// Predicts the diffusion trajectory from the initial condition with `dx`
/// set to each value in `model_dx`, and compares against the analytic
/// solution. The solver's own error at each `solver_dx` is computed the
/// same way for reference.
pub fn extrapolation_study(
    predictor: &dyn Predictor,
    scaler: &Scaler,
    setup: &TrajectorySetup,
    model_dx: &[f64],
    solver_dx: &[f64],
) -> Result<ExtrapolationResult> {
    let analytic = setup.analytic();
    let offset = 2;
    let truth = scaled_truth(scaler, offset, &analytic);
    let mut model_rows = Vec::new();
    for &dx in model_dx {
        let params = sequence_params(setup.diffusivity, dx);
        let statics: Vec<f64> = params.values().copied().collect();
        let scaled_statics = scaler.apply_statics(&statics);
        let pred = predictor.predict(u64::MAX, &scaled_statics, &truth[..1], truth.len() - 1)?;
        let e = iae(&pred, &truth[1..])?;
        model_rows.push(StudyRow {
            x: dx,
            median_iae: e,
            mean_iae: e,
            n: 1,
        });
    }
    let solver_errors = solver_dx
        .par_iter()
        .map(|&dx| {
            let cfg = DiffusionConfig::new(setup.diffusivity, dx, setup.dt, setup.n_steps);
            let seq = downsample(&simulate(&cfg)?, setup.stride);
            let numeric = scaled_truth(scaler, offset, &seq.qoi);
            iae(&numeric[1..], &truth[1..])
        })
        .collect::<Result<Vec<_>>>()?;
    let solver_rows = solver_dx
        .iter()
        .zip(&solver_errors)
        .map(|(&dx, &e)| StudyRow {
            x: dx,
            median_iae: e,
            mean_iae: e,
            n: 1,
        })
        .collect();
    Ok(ExtrapolationResult {
        model: StudyTable::new(StudyKind::Extrapolation, model_rows),
        solver: StudyTable::new(StudyKind::SolverError, solver_rows),
        solver_order: fit_order(solver_dx, &solver_errors),
    })
}

/// Spearman rank correlation, with tied values given their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let r = pearson(&rx, &ry);
    r.is_finite().then_some(r)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (x.mean(), y.mean());
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// A stream of raw QOI steps, starting at step 0.
pub trait SequenceSource {
    fn id(&self) -> u64;
    /// Raw static parameters in name order.
    fn statics(&self) -> Vec<f64>;
    /// Total number of steps the source will produce.
    fn total_len(&self) -> usize;
    fn next_step(&mut self) -> Result<Option<Vec<f64>>>;
}

/// Replays a stored sequence.
#[derive(Clone, Debug)]
pub struct RecordedSource<'a> {
    seq: &'a SimulationSequence,
    pos: usize,
}

impl<'a> RecordedSource<'a> {
    pub fn new(seq: &'a SimulationSequence) -> Self {
        Self { seq, pos: 0 }
    }
}

impl SequenceSource for RecordedSource<'_> {
    fn id(&self) -> u64 {
        self.seq.id
    }

    fn statics(&self) -> Vec<f64> {
        self.seq.static_values()
    }

    fn total_len(&self) -> usize {
        self.seq.len()
    }

    fn next_step(&mut self) -> Result<Option<Vec<f64>>> {
        let step = self.seq.qoi.get(self.pos).cloned();
        self.pos += 1;
        Ok(step)
    }
}

/// Drives a running diffusion solve, emitting every `stride`-th step.
pub struct LiveSource {
    id: u64,
    run: DiffusionRun,
    stride: usize,
    started: bool,
}

impl LiveSource {
    pub fn new(id: u64, config: DiffusionConfig, stride: usize) -> Result<Self> {
        Ok(Self {
            id,
            run: DiffusionRun::new(config)?,
            stride: stride.max(1),
            started: false,
        })
    }

    /// Solver steps actually taken so far.
    pub fn solver_steps(&self) -> usize {
        self.run.step_index()
    }
}

impl SequenceSource for LiveSource {
    fn id(&self) -> u64 {
        self.id
    }

    fn statics(&self) -> Vec<f64> {
        let c = self.run.config();
        sequence_params(c.diffusivity, c.dx).values().copied().collect()
    }

    fn total_len(&self) -> usize {
        self.run.config().n_steps / self.stride + 1
    }

    fn next_step(&mut self) -> Result<Option<Vec<f64>>> {
        if !self.started {
            self.started = true;
            return Ok(Some(self.run.qoi()));
        }
        let n_steps = self.run.config().n_steps;
        if self.run.step_index() + self.stride > n_steps {
            return Ok(None);
        }
        for _ in 0..self.stride {
            self.run.advance()?;
        }
        Ok(Some(self.run.qoi()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Terminate,
    Continue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub checkpoint: usize,
    /// Steps observed when the check window was predicted.
    pub n_obs: usize,
    pub iae: f64,
    pub decision: Decision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopTrace {
    pub checkpoints: Vec<Checkpoint>,
    /// Scaled steps consumed from the source.
    pub observed: Vec<Vec<f64>>,
    /// On termination, the scaled prediction for every step after `observed`.
    pub remainder: Option<Vec<Vec<f64>>>,
}

impl EarlyStopTrace {
    pub fn terminated(&self) -> bool {
        self.remainder.is_some()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for c in &self.checkpoints {
            out.serialize(c).map_err(|e| Error::InvalidConfig(format!("trace csv: {e}")))?;
        }
        out.flush().map_err(|e| Error::io("<trace csv>", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Watches a running simulation. After `n_obs` steps, and then after every
/// further check window, predicts the next `check_horizon` steps, reads the
/// true ones, and terminates once the window IAE drops below `threshold`.
pub fn early_stop_monitor(
    source: &mut dyn SequenceSource,
    predictor: &dyn Predictor,
    scaler: &Scaler,
    n_obs: usize,
    check_horizon: usize,
    threshold: f64,
) -> Result<EarlyStopTrace> {
    if n_obs == 0 || check_horizon == 0 {
        return Err(Error::OutOfRange("n_obs and check_horizon must both be at least 1".into()));
    }
    if !(threshold >= 0.0) {
        return Err(Error::OutOfRange(format!("threshold must be non-negative, got {threshold}")));
    }
    let offset = source.statics().len();
    let statics = scaler.apply_statics(&source.statics());
    let total = source.total_len();
    if n_obs + check_horizon > total {
        return Err(Error::OutOfRange(format!(
            "source has {total} steps, fewer than n_obs + check_horizon = {}",
            n_obs + check_horizon
        )));
    }
    let read = |source: &mut dyn SequenceSource, what: &str| -> Result<Vec<f64>> {
        let q = source
            .next_step()?
            .ok_or_else(|| Error::OutOfRange(format!("source exhausted while reading {what}")))?;
        Ok(scaler.apply_qoi(offset, &q))
    };

    let mut observed = Vec::with_capacity(total);
    for _ in 0..n_obs {
        observed.push(read(source, "the initial observations")?);
    }
    let mut trace = EarlyStopTrace {
        checkpoints: Vec::new(),
        observed: Vec::new(),
        remainder: None,
    };
    while observed.len() + check_horizon <= total {
        let seen = observed.len();
        let pred = predictor.predict(source.id(), &statics, &observed, check_horizon)?;
        let mut window = Vec::with_capacity(check_horizon);
        for _ in 0..check_horizon {
            window.push(read(source, "a check window")?);
        }
        let e = iae(&pred, &window)?;
        observed.extend(window);
        let decision = if e < threshold {
            Decision::Terminate
        } else {
            Decision::Continue
        };
        trace.checkpoints.push(Checkpoint {
            checkpoint: trace.checkpoints.len() + 1,
            n_obs: seen,
            iae: e,
            decision,
        });
        if decision == Decision::Terminate {
            let rest = total - observed.len();
            if rest > 0 {
                trace.remainder = Some(predictor.predict(source.id(), &statics, &observed, rest)?);
            } else {
                trace.remainder = Some(Vec::new());
            }
            break;
        }
    }
    trace.observed = observed;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::sequence_params;
    use proptest::prelude::*;

    fn curve(id: u64, d: f64, len: usize) -> SimulationSequence {
        SimulationSequence {
            id,
            params: sequence_params(d, 1e-4),
            dt: 1e-5,
            qoi_dim: 1,
            qoi: (0..len).map(|t| vec![1.0 - (-(d * 0.02) * t as f64).exp()]).collect(),
        }
    }

    fn data() -> (Scaler, Vec<SimulationSequence>) {
        let seqs: Vec<_> = (0..6).map(|i| curve(i, 1.0 + 0.3 * i as f64, 40)).collect();
        (Scaler::fit(&seqs).unwrap(), seqs)
    }

    #[test]
    fn iae_basics() {
        let a = vec![vec![0.1], vec![0.5], vec![0.9]];
        assert_eq!(iae(&a, &a).unwrap(), 0.0);
        let shifted: Vec<Vec<f64>> = a.iter().map(|v| vec![v[0] + 0.1]).collect();
        assert!((iae(&shifted, &a).unwrap() - 0.1).abs() < 1e-15);
        assert!(iae(&a[..2], &a).is_err());
        // dims averaged before the time average
        let p = vec![vec![0.0, 0.0]];
        let t = vec![vec![1.0, 0.0]];
        assert_eq!(iae(&p, &t).unwrap(), 0.5);
    }

    #[test]
    fn oracle_report_is_zero() {
        let (scaler, seqs) = data();
        let oracle = OraclePredictor::new(&scaler, &seqs).unwrap();
        let r = evaluate_test(&oracle, &scaler, &seqs, 1, "x").unwrap();
        assert!(r.per_sequence.iter().all(|s| s.iae == 0.0));
        assert_eq!(r.stats.median, 0.0);
        assert!(evaluate_test(&oracle, &scaler, &[], 1, "x").is_err());
    }

    #[test]
    fn constant_stub_hand_summation() {
        let (scaler, seqs) = data();
        let stub = ConstantPredictor { value: 0.5, qoi_dim: 1 };
        let r = evaluate_test(&stub, &scaler, &seqs, 1, "").unwrap();
        for (row, s) in r.per_sequence.iter().zip(&seqs) {
            let scaled = scaler.apply(s).unwrap();
            let mut sum = 0.0;
            for q in &scaled.qoi[1..] {
                sum += (q[0] - 0.5).abs();
            }
            assert!((row.iae - sum / (s.len() - 1) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn stats_recompute() {
        let (scaler, seqs) = data();
        let stub = ConstantPredictor { value: 0.3, qoi_dim: 1 };
        let r = evaluate_test(&stub, &scaler, &seqs, 3, "").unwrap();
        let mut v = r.iae_values();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        v.sort_by(f64::total_cmp);
        let median = (v[2] + v[3]) / 2.0;
        assert!((r.stats.mean - mean).abs() <= 1e-12);
        assert!((r.stats.sd - sd).abs() <= 1e-12);
        assert!((r.stats.median - median).abs() <= 1e-12);
    }

    #[test]
    fn parallel_matches_serial() {
        let (scaler, seqs) = data();
        let stub = ConstantPredictor { value: 0.2, qoi_dim: 1 };
        let a = crate::data::with_jobs(1, || evaluate_test(&stub, &scaler, &seqs, 2, "").unwrap());
        let b = crate::data::with_jobs(4, || evaluate_test(&stub, &scaler, &seqs, 2, "").unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn length_study_rows() {
        let (scaler, seqs) = data();
        let oracle = OraclePredictor::new(&scaler, &seqs).unwrap();
        let t = input_length_study(&oracle, &scaler, &seqs, &[30, 10, 20]).unwrap();
        assert_eq!(t.xs(), vec![10.0, 20.0, 30.0]);
        assert!(t.medians().iter().all(|&m| m == 0.0));
        assert!(input_length_study(&oracle, &scaler, &seqs, &[40]).is_err());
        assert!(input_length_study(&oracle, &scaler, &seqs, &[0]).is_err());
    }

    #[test]
    fn spearman_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        // monotone but non-linear
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]), Some(1.0));
        // ties take average ranks: x ranks 1,2,3,4 vs y ranks 1.5,1.5,3,4
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[5.0, 5.0, 6.0, 7.0]).unwrap();
        assert!((r - 0.9486832980505138).abs() < 1e-12);
        assert_eq!(spearman(&[1.0], &[1.0]), None);
    }

    #[test]
    fn early_stop_decisions() {
        let (scaler, seqs) = data();
        let oracle = OraclePredictor::new(&scaler, &seqs).unwrap();
        let s = &seqs[2];

        let t = early_stop_monitor(&mut RecordedSource::new(s), &oracle, &scaler, 5, 5, 1e-12).unwrap();
        assert_eq!(t.checkpoints.len(), 1);
        assert_eq!(t.checkpoints[0].decision, Decision::Terminate);
        assert_eq!(t.observed.len() + t.remainder.as_ref().unwrap().len(), s.len());

        let stub = ConstantPredictor { value: 0.5, qoi_dim: 1 };
        let t = early_stop_monitor(&mut RecordedSource::new(s), &stub, &scaler, 5, 5, f64::INFINITY).unwrap();
        assert_eq!(t.checkpoints.len(), 1);
        assert!(t.terminated());

        let t = early_stop_monitor(&mut RecordedSource::new(s), &stub, &scaler, 5, 5, 0.0).unwrap();
        assert_eq!(t.checkpoints.len(), 7);
        assert!(t.checkpoints.iter().all(|c| c.decision == Decision::Continue));
        assert!(!t.terminated());
        assert_eq!(t.observed.len(), 40);
        assert_eq!(t.checkpoints[6].n_obs, 35);

        assert!(early_stop_monitor(&mut RecordedSource::new(s), &stub, &scaler, 35, 6, 1.0).is_err());
        assert!(early_stop_monitor(&mut RecordedSource::new(s), &stub, &scaler, 0, 6, 1.0).is_err());
    }

    #[test]
    fn trace_csv_format() {
        let (scaler, seqs) = data();
        let stub = ConstantPredictor { value: 0.5, qoi_dim: 1 };
        let t = early_stop_monitor(&mut RecordedSource::new(&seqs[0]), &stub, &scaler, 20, 10, 0.0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "checkpoint,n_obs,iae,decision");
        assert!(lines[1].starts_with("1,20,"));
        assert!(lines[1].ends_with(",CONTINUE"));
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn live_source_matches_recorded_run() {
        let cfg = DiffusionConfig::new(1.5, 1e-2, 1e-5, 40);
        let recorded = downsample(&crate::diffusion::simulate_with_id(&cfg, 3).unwrap(), 4);
        let mut live = LiveSource::new(3, cfg, 4).unwrap();
        assert_eq!(live.total_len(), recorded.len());
        assert_eq!(live.statics(), recorded.static_values());
        let mut steps = Vec::new();
        while let Some(q) = live.next_step().unwrap() {
            steps.push(q);
        }
        assert_eq!(steps, recorded.qoi);
    }

    #[test]
    fn early_stop_on_live_source_saves_solver_work() {
        let cfg = DiffusionConfig::new(1.5, 1e-2, 1e-5, 400);
        let seq = crate::diffusion::simulate_with_id(&cfg, 0).unwrap();
        let scaler = Scaler::fit([&seq]).unwrap();
        let oracle = OraclePredictor::new(&scaler, [&seq]).unwrap();
        let mut live = LiveSource::new(0, cfg, 1).unwrap();
        let t = early_stop_monitor(&mut live, &oracle, &scaler, 50, 10, 1e-12).unwrap();
        assert!(t.terminated());
        assert_eq!(live.solver_steps(), 59);
    }

    #[test]
    fn extrapolation_solver_rows() {
        let seqs: Vec<_> = [1e-3, 1e-4]
            .iter()
            .map(|&dx| crate::diffusion::simulate(&DiffusionConfig::new(1.34, dx, 1e-5, 20)).unwrap())
            .collect();
        let scaler = Scaler::fit(&seqs).unwrap();
        let setup = TrajectorySetup {
            diffusivity: 1.34,
            dt: 1e-5,
            n_steps: 20,
            stride: 2,
        };
        let stub = ConstantPredictor { value: 0.5, qoi_dim: 1 };
        let r = extrapolation_study(&stub, &scaler, &setup, &[1e-6, 1e-5], &[1e-3, 5e-4]).unwrap();
        assert_eq!(r.model.xs(), vec![1e-6, 1e-5]);
        assert_eq!(r.solver.rows.len(), 2);
        assert!(r.solver.rows.iter().all(|row| row.median_iae > 0.0));
        let truth = scaled_truth(&scaler, 2, &setup.analytic());
        let by_hand = truth[1..].iter().map(|q| (q[0] - 0.5).abs()).sum::<f64>() / 10.0;
        assert!((r.model.rows[0].median_iae - by_hand).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn iae_metric_properties(
            a in prop::collection::vec(-2.0f64..2.0, 1..30),
            b_off in prop::collection::vec(-1.0f64..1.0, 30),
            c_off in prop::collection::vec(-1.0f64..1.0, 30),
        ) {
            let wrap = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
            let b: Vec<f64> = a.iter().zip(&b_off).map(|(x, o)| x + o).collect();
            let c: Vec<f64> = a.iter().zip(&c_off).map(|(x, o)| x + o).collect();
            let (a, b, c) = (wrap(&a), wrap(&b), wrap(&c));
            let ab = iae(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!(iae(&a, &c).unwrap() <= ab + iae(&b, &c).unwrap() + 1e-12);
            let (mut ar, mut br) = (a.clone(), b.clone());
            ar.reverse();
            br.reverse();
            prop_assert!((iae(&ar, &br).unwrap() - ab).abs() <= 1e-12);
            prop_assert_eq!(iae(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn decision_is_threshold_comparison(threshold in 0.0f64..0.6, value in 0.0f64..1.0) {
            let (scaler, seqs) = data();
            let stub = ConstantPredictor { value, qoi_dim: 1 };
            let t = early_stop_monitor(&mut RecordedSource::new(&seqs[1]), &stub, &scaler, 5, 5, threshold).unwrap();
            for c in &t.checkpoints {
                prop_assert_eq!(c.decision == Decision::Terminate, c.iae < threshold);
            }
        }
    }
}
