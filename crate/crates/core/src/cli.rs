//! Command-line front end. Every subcommand logs its resolved configuration
//! as one JSON line on stderr, and failures end with one JSON error line:
//! exit 1 for bad input, 2 for a runtime or numerical abort.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{
    apply_split, diffusion_space, downsample, generate_dataset, manifest_path_for, read_dataset, select, with_jobs,
    write_atomic, GenerationConfig, Manifest, Sampler, Scale, Scaler,
};
use crate::diffusion::{convergence_study, spatial_convergence_study, DiffusionConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    digest_hex, early_stop_monitor, evaluate_test, extrapolation_study, input_length_study, iae, LiveSource,
    OraclePredictor, Predictor, TrajectorySetup,
};
use crate::json;
use crate::models::{load_model, save_model, Family, Surrogate};
use crate::sequence::SimulationSequence;
use crate::training::{toy_gradient_check, train_seq2seq_with, train_state_transition_with, TrainConfig};

/// Downsampling stride of the desk-scale preset.
pub const DESK_STRIDE: usize = 10;
/// Encoder-decoder epochs under the desk-scale preset.
pub const DESK_SEQ2SEQ_EPOCHS: usize = 500;
/// Solver resolutions spanning the training range of dx, used as the
/// reference column of the extrapolation study.
pub const SOLVER_REFERENCE_DX: [f64; 7] = [1e-3, 5e-4, 2e-4, 1e-4, 5e-5, 2e-5, 1e-5];
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-5;
pub const GRAD_CHECK_PROBE: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "seqsurrogate", version, about = "Sequence surrogates for 1D diffusion runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample parameters and simulate a dataset
    Generate(GenerateArgs),
    /// Partition a dataset into train and test and fit the scaler
    Split(SplitArgs),
    /// Train a surrogate on the training split
    Train(TrainArgs),
    /// Per-sequence IAE on the test split
    Eval(EvalArgs),
    /// Test IAE as a function of the observed input length
    StudyLength(StudyLengthArgs),
    /// Model and solver error against the analytic solution across dx
    StudyDx(StudyDxArgs),
    /// Run the early-termination monitor over the test split
    EarlyStop(EarlyStopArgs),
    /// Finite-difference check of the training gradients
    GradCheck(GradCheckArgs),
    /// Solver convergence against the analytic solution
    Converge(ConvergeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum DxScale {
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModelKind {
    Seq2seq,
    StateTransition,
    Oracle,
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    d_min: f64,
    #[arg(long, default_value_t = 3.0)]
    d_max: f64,
    #[arg(long, default_value_t = 1e-5)]
    dx_min: f64,
    #[arg(long, default_value_t = 1e-3)]
    dx_max: f64,
    #[arg(long, value_enum, default_value_t = DxScale::Log)]
    dx_scale: DxScale,
    #[arg(long, default_value_t = 1e-6)]
    dt: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Manifest path [default: <out>.manifest.json]
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug, Serialize)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Generation manifest [default: <data>.manifest.json]
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    /// Split seed [default: the generation seed]
    #[arg(long)]
    seed: Option<u64>,
    /// Split manifest to write [default: <data>.split.json]
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Inputs shared by the subcommands that read a split dataset.
#[derive(Args, Debug, Serialize)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Split manifest [default: <data>.split.json]
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Downsample sequences by 10 (and shorten training) for laptop-sized runs
    #[arg(long)]
    desk_scale: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    #[command(flatten)]
    data: DataArgs,
    /// JSON object overriding training settings
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model file to write; the loss history goes next to it as .history.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Model file, or `oracle` for the replaying test stub
    #[arg(long)]
    model: String,
    #[command(flatten)]
    data: DataArgs,
    /// Observed steps handed to the model before it predicts
    #[arg(long, default_value_t = 1)]
    n_obs: usize,
    /// Per-sequence report CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct StudyLengthArgs {
    /// Model file, or `oracle`
    #[arg(long)]
    model: String,
    #[command(flatten)]
    data: DataArgs,
    /// Input lengths as start:end:step, end inclusive
    #[arg(long, default_value = "10:90:10")]
    lengths: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct StudyDxArgs {
    /// Model file
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 1.34)]
    d: f64,
    /// Comma-separated dx values handed to the model
    #[arg(long, default_value = "1e-5,5e-6,2e-6,1e-6")]
    dx_list: String,
    #[arg(long, default_value_t = 1e-6)]
    dt: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long)]
    desk_scale: bool,
    /// Model table CSV; the solver table goes next to it as .solver.csv
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug, Serialize)]
struct EarlyStopArgs {
    /// Model file, or `oracle`
    #[arg(long)]
    model: String,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 50)]
    n_obs: usize,
    #[arg(long, default_value_t = 10)]
    check_horizon: usize,
    #[arg(long, default_value_t = 0.02)]
    threshold: f64,
    /// Directory for the per-sequence traces and summary.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GradCheckArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct ConvergeArgs {
    #[arg(long, default_value_t = 1.34)]
    d: f64,
    #[arg(long, default_value = "1e-3,5e-4,2e-4,1e-4")]
    dx_list: String,
    #[arg(long, default_value_t = 1e-6)]
    dt: f64,
    /// Evaluation time
    #[arg(long, default_value_t = 1e-3)]
    t: f64,
    /// Optional CSV of dx and error
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a CLI run, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    /// The one-line error report written to stderr.
    pub fn to_line(&self) -> String {
        let kind = if self.code == 1 { "validation" } else { "runtime" };
        serde_json::json!({ "error": kind, "exit_code": self.code, "message": self.message }).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() { 1 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", Failure::validation(first).to_line());
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.to_line());
            f.code
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Generate(a) => generate(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::StudyLength(a) => study_length(a),
        Command::StudyDx(a) => study_dx(a),
        Command::EarlyStop(a) => early_stop(a),
        Command::GradCheck(a) => grad_check(a),
        Command::Converge(a) => converge(a),
    }
}

fn log_config(command: &str, config: &impl Serialize) {
    let line = serde_json::json!({ "command": command, "config": config });
    eprintln!("{line}");
}

fn print_json(value: &serde_json::Value) {
    println!("{value}");
}

/// Default split-manifest location next to a dataset file.
pub fn split_path_for(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".split.json");
    dataset.with_file_name(name)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    let mut name = stem;
    name.push(suffix);
    path.with_file_name(name)
}

fn write_csv_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    write_atomic(path, &buf)
}

fn generate(a: GenerateArgs) -> CliResult {
    let scale = match a.dx_scale {
        DxScale::Linear => Scale::Linear,
        DxScale::Log => Scale::Log,
    };
    let cfg = GenerationConfig {
        space: diffusion_space(a.d_min, a.d_max, a.dx_min, a.dx_max, scale),
        n: a.n,
        dt: a.dt,
        n_steps: a.steps,
        sampler: Sampler::Uniform,
        seed: a.seed,
        record_profile: false,
        profile_points: 100,
    };
    let manifest = a.manifest.clone().unwrap_or_else(|| manifest_path_for(&a.out));
    log_config("generate", &serde_json::json!({ "generation": cfg, "out": a.out, "manifest": manifest, "jobs": a.jobs }));
    if a.n == 0 {
        return Err(Failure::validation("--n must be at least 1"));
    }
    DiffusionConfig::new(a.d_min, a.dx_min, a.dt, a.steps).validate()?;
    let (seqs, _) = generate_dataset(&cfg, &a.out, &manifest, a.jobs)?;
    print_json(&serde_json::json!({ "sequences": seqs.len(), "out": a.out, "manifest": manifest }));
    Ok(())
}

fn split(a: SplitArgs) -> CliResult {
    let manifest_path = a.manifest.clone().unwrap_or_else(|| manifest_path_for(&a.data));
    let out = a.out.clone().unwrap_or_else(|| split_path_for(&a.data));
    let mut manifest = Manifest::read(&manifest_path)?;
    let seed = a.seed.unwrap_or(manifest.seed);
    log_config(
        "split",
        &serde_json::json!({ "data": a.data, "manifest": manifest_path, "train_frac": a.train_frac, "seed": seed, "out": out }),
    );
    if out == manifest_path || out == a.data {
        return Err(Failure::validation("--out must differ from the input files"));
    }
    let seqs = read_dataset(&a.data)?;
    apply_split(&seqs, &mut manifest, a.train_frac, seed)?;
    manifest.write(&out)?;
    let s = manifest.split()?;
    print_json(&serde_json::json!({ "train": s.train.len(), "test": s.test.len(), "out": out }));
    Ok(())
}

/// Train and test sequences of a split dataset, downsampled under the
/// desk-scale preset.
struct SplitData {
    manifest: Manifest,
    train: Vec<SimulationSequence>,
    test: Vec<SimulationSequence>,
    stride: usize,
}

fn load_split(a: &DataArgs) -> Result<SplitData> {
    let manifest_path = a.manifest.clone().unwrap_or_else(|| split_path_for(&a.data));
    let manifest = Manifest::read(&manifest_path)?;
    let split = manifest.split()?.clone();
    let seqs = read_dataset(&a.data)?;
    let stride = if a.desk_scale { DESK_STRIDE } else { 1 };
    let prep = |ids: &[u64]| -> Result<Vec<SimulationSequence>> {
        Ok(select(&seqs, ids)?.iter().map(|s| downsample(s, stride)).collect())
    };
    Ok(SplitData {
        train: prep(&split.train)?,
        test: prep(&split.test)?,
        manifest,
        stride,
    })
}

fn train(a: TrainArgs) -> CliResult {
    let family = match a.model {
        ModelKind::Seq2seq => Family::Seq2seq,
        ModelKind::StateTransition => Family::StateTransition,
        ModelKind::Oracle => return Err(Failure::validation("the oracle stub cannot be trained")),
    };
    let mut cfg = match family {
        Family::Seq2seq => TrainConfig::seq2seq_default(),
        Family::StateTransition => TrainConfig::state_transition_default(),
    };
    if a.data.desk_scale && family == Family::Seq2seq {
        cfg.n_epochs = DESK_SEQ2SEQ_EPOCHS;
    }
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg = cfg.merged_with_json(&text)?;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    log_config("train", &serde_json::json!({ "args": &a, "family": family, "train": cfg }));
    let data = load_split(&a.data)?;
    let report_every = cfg.report_every;
    let progress = |r: &crate::training::EpochRecord| {
        if r.epoch % report_every == 0 {
            eprintln!("{}", serde_json::json!({ "epoch": r.epoch, "loss": r.loss }));
        }
    };
    let (model, history) = with_jobs(a.data.jobs, || -> Result<_> {
        Ok(match family {
            Family::Seq2seq => {
                let (m, h) = train_seq2seq_with(&data.train, &cfg, progress)?;
                (Surrogate::Seq2Seq(m), h)
            }
            Family::StateTransition => {
                let (m, h) = train_state_transition_with(&data.train, &cfg, progress)?;
                (Surrogate::StateTransition(m), h)
            }
        })
    })?;
    save_model(&model, &a.out)?;
    let history_path = sibling(&a.out, ".history.csv");
    write_csv_file(&history_path, |b| history.write_csv(b))?;
    print_json(&serde_json::json!({
        "model": a.out,
        "history": history_path,
        "epochs": history.len(),
        "first_loss": history.first_loss(),
        "final_loss": history.final_loss(),
    }));
    Ok(())
}

/// A loaded predictor with the scaler it expects and a digest naming it.
struct Loaded {
    predictor: Box<dyn Predictor>,
    scaler: Scaler,
    digest: String,
}

fn load_predictor(spec: &str, data: &SplitData) -> Result<Loaded> {
    if spec == "oracle" {
        let scaler = data.manifest.scaler()?.clone();
        let oracle = OraclePredictor::new(&scaler, data.test.iter())?;
        return Ok(Loaded {
            predictor: Box::new(oracle),
            scaler,
            digest: digest_hex(b"oracle"),
        });
    }
    let path = Path::new(spec);
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let model = load_model(path)?;
    let scaler = model
        .scaler()
        .cloned()
        .ok_or_else(|| Error::InvalidConfig(format!("model file {spec} carries no scaler")))?;
    Ok(Loaded {
        predictor: Box::new(model),
        scaler,
        digest: digest_hex(&bytes),
    })
}

fn eval(a: EvalArgs) -> CliResult {
    log_config("eval", &a);
    let data = load_split(&a.data)?;
    let loaded = load_predictor(&a.model, &data)?;
    let report = with_jobs(a.data.jobs, || {
        evaluate_test(loaded.predictor.as_ref(), &loaded.scaler, &data.test, a.n_obs, &loaded.digest)
    })?;
    write_csv_file(&a.out, |b| report.write_csv(b))?;
    print_json(&serde_json::json!({
        "model": report.model,
        "config_digest": report.config_digest,
        "input_len": report.input_len,
        "stats": report.stats,
        "out": a.out,
    }));
    Ok(())
}

/// Parses `start:end:step` with `end` inclusive.
pub fn parse_lengths(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("--lengths expects start:end:step, got `{text}`"));
    let parts: Vec<usize> = text
        .split(':')
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if step == 0 || start == 0 || start > end {
        return Err(bad());
    }
    Ok((start..=end).step_by(step).collect())
}

/// Parses a comma-separated list of positive reals.
pub fn parse_dx_list(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(|| Error::InvalidConfig(format!("--dx-list entry `{}` is not a positive number", p.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Empty("dx list"));
    }
    Ok(values)
}

fn study_length(a: StudyLengthArgs) -> CliResult {
    log_config("study-length", &a);
    let lengths = parse_lengths(&a.lengths)?;
    let data = load_split(&a.data)?;
    let loaded = load_predictor(&a.model, &data)?;
    let table = with_jobs(a.data.jobs, || {
        input_length_study(loaded.predictor.as_ref(), &loaded.scaler, &data.test, &lengths)
    })?;
    write_csv_file(&a.out, |b| table.write_csv(b))?;
    print_json(&serde_json::json!({ "rows": table.rows.len(), "out": a.out }));
    Ok(())
}

fn study_dx(a: StudyDxArgs) -> CliResult {
    log_config("study-dx", &a);
    let model_dx = parse_dx_list(&a.dx_list)?;
    let path = Path::new(&a.model);
    let model = load_model(path)?;
    let scaler = model
        .scaler()
        .cloned()
        .ok_or_else(|| Error::InvalidConfig(format!("model file {} carries no scaler", a.model)))?;
    let setup = TrajectorySetup {
        diffusivity: a.d,
        dt: a.dt,
        n_steps: a.steps,
        stride: if a.desk_scale { DESK_STRIDE } else { 1 },
    };
    let result = with_jobs(a.jobs, || extrapolation_study(&model, &scaler, &setup, &model_dx, &SOLVER_REFERENCE_DX))?;
    let solver_path = sibling(&a.out, ".solver.csv");
    write_csv_file(&a.out, |b| result.model.write_csv(b))?;
    write_csv_file(&solver_path, |b| result.solver.write_csv(b))?;
    print_json(&serde_json::json!({
        "out": a.out,
        "solver_out": solver_path,
        "solver_order": result.solver_order,
    }));
    Ok(())
}

#[derive(Serialize)]
struct EarlyStopRow {
    sequence_id: u64,
    checkpoints: usize,
    terminated: bool,
    solver_steps: usize,
    total_steps: usize,
    remainder_iae: Option<f64>,
}

fn early_stop(a: EarlyStopArgs) -> CliResult {
    log_config("early-stop", &a);
    let data = load_split(&a.data)?;
    let loaded = load_predictor(&a.model, &data)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let (dt, n_steps) = (data.manifest.dt, data.manifest.n_steps);
    let offset = data.test.first().map_or(0, |s| s.params.len());
    let mut rows = Vec::with_capacity(data.test.len());
    for seq in &data.test {
        let (Some(d), Some(dx)) = (seq.param("D"), seq.param("dx")) else {
            return Err(Error::InvalidConfig(format!("sequence {} lacks D or dx", seq.id)).into());
        };
        let mut source = LiveSource::new(seq.id, DiffusionConfig::new(d, dx, dt, n_steps), data.stride)?;
        let trace = early_stop_monitor(
            &mut source,
            loaded.predictor.as_ref(),
            &loaded.scaler,
            a.n_obs,
            a.check_horizon,
            a.threshold,
        )?;
        let remainder_iae = match &trace.remainder {
            Some(rest) if !rest.is_empty() => {
                let truth: Vec<Vec<f64>> = seq.qoi[trace.observed.len()..]
                    .iter()
                    .map(|q| loaded.scaler.apply_qoi(offset, q))
                    .collect();
                Some(iae(rest, &truth)?)
            }
            _ => None,
        };
        let trace_path = a.out.join(format!("trace_{}.csv", seq.id));
        write_csv_file(&trace_path, |b| trace.write_csv(b))?;
        rows.push(EarlyStopRow {
            sequence_id: seq.id,
            checkpoints: trace.checkpoints.len(),
            terminated: trace.terminated(),
            solver_steps: source.solver_steps(),
            total_steps: n_steps,
            remainder_iae,
        });
    }
    let summary = a.out.join("summary.csv");
    write_csv_file(&summary, |b| {
        let mut w = csv::Writer::from_writer(b);
        for r in &rows {
            w.serialize(r).map_err(|e| Error::InvalidConfig(format!("summary csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::io(&summary, e))
    })?;
    let terminated = rows.iter().filter(|r| r.terminated).count();
    print_json(&serde_json::json!({
        "sequences": rows.len(),
        "terminated": terminated,
        "fraction_terminated": terminated as f64 / rows.len().max(1) as f64,
        "summary": summary,
    }));
    Ok(())
}

fn grad_check(a: GradCheckArgs) -> CliResult {
    log_config("grad-check", &serde_json::json!({ "args": &a, "probe": GRAD_CHECK_PROBE, "tolerance": GRAD_CHECK_TOLERANCE }));
    let family = match a.model {
        ModelKind::Seq2seq => Family::Seq2seq,
        ModelKind::StateTransition => Family::StateTransition,
        ModelKind::Oracle => return Err(Failure::validation("the oracle stub has no gradients")),
    };
    let devs = toy_gradient_check(family, a.seed, GRAD_CHECK_PROBE)?;
    println!("group,max_rel");
    for d in &devs {
        println!("{},{:e}", d.name, d.max_rel);
    }
    let worst = devs.iter().max_by(|x, y| x.max_rel.total_cmp(&y.max_rel));
    match worst {
        Some(w) if !(w.max_rel <= GRAD_CHECK_TOLERANCE) => Err(Failure::runtime(format!(
            "gradient check failed: {} deviates by {:e} (tolerance {:e})",
            w.name, w.max_rel, GRAD_CHECK_TOLERANCE
        ))),
        _ => Ok(()),
    }
}

fn converge(a: ConvergeArgs) -> CliResult {
    log_config("converge", &a);
    let dx = parse_dx_list(&a.dx_list)?;
    let study = convergence_study(a.d, &dx, a.dt, a.t)?;
    let spatial = spatial_convergence_study(a.d, &dx, a.dt, a.t, 4)?;
    if let Some(out) = &a.out {
        let mut text = String::from("dx,error,spatial_error\n");
        for ((x, e), s) in study.dx.iter().zip(&study.errors).zip(&spatial.errors) {
            text.push_str(&format!("{x:e},{e:e},{s:e}\n"));
        }
        write_atomic(out, text.as_bytes())?;
    }
    let body = serde_json::json!({
        "dx": study.dx,
        "errors": study.errors,
        "order": study.order,
        "spatial_errors": spatial.errors,
        "spatial_order": spatial.order,
    });
    println!("{}", String::from_utf8(json::to_vec(&body).expect("serializes")).expect("utf-8"));
    Ok(())
}
