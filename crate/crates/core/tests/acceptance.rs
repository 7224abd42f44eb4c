//! Acceptance suite. Prints one PASS/FAIL line per criterion, with indented
//! detail lines under it, then a summary. Exits non-zero on a FAIL only when
//! ACCEPTANCE_STRICT=1, so the suite can run inside `cargo test` while still
//! showing every result.

use std::time::Instant;

use seqsurrogate::cli::{DESK_SEQ2SEQ_EPOCHS, DESK_STRIDE, GRAD_CHECK_PROBE, GRAD_CHECK_TOLERANCE, SOLVER_REFERENCE_DX};
use seqsurrogate::data::{
    downsample, select, simulate_dataset, split_dataset, streams, write_dataset, GenerationConfig, ParamDim, ParamSpace,
    Scale, Scaler,
};
use seqsurrogate::diffusion::{
    analytic_concentration, convergence_study, solve_tridiagonal, spatial_convergence_study, DiffusionConfig,
    DiffusionRun,
};
use seqsurrogate::evaluation::{
    early_stop_monitor, evaluate_test, extrapolation_study, input_length_study, spearman, ConstantPredictor, Decision,
    LiveSource, OraclePredictor, Predictor, TrajectorySetup,
};
use seqsurrogate::models::{load_model, save_model, to_bytes, DenseArch, Seq2SeqArch, Seq2SeqModel, StateTransitionModel, Surrogate};
use seqsurrogate::numerics::RngStream;
use seqsurrogate::training::{toy_gradient_check, train_seq2seq, train_state_transition, InputMode, TrainConfig};
use seqsurrogate::models::Family;
use seqsurrogate::SimulationSequence;

struct Suite {
    passed: usize,
    failed: usize,
}

impl Suite {
    fn record(&mut self, id: usize, name: &str, pass: bool, summary: String, details: &[String]) {
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("{} [{id}] {name}: {summary}", if pass { "PASS" } else { "FAIL" });
        for d in details {
            println!("      {d}");
        }
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn main() {
    let mut suite = Suite { passed: 0, failed: 0 };
    let started = Instant::now();

    solver_convergence(&mut suite);
    analytic_oracle(&mut suite);
    gradient_integrity(&mut suite);
    property_suites(&mut suite);

    let desk = DeskData::build();
    let table = table_reproduction(&mut suite, &desk);
    let variable = train_variable_length(&desk);
    input_length(&mut suite, &desk, &variable);
    extrapolation(&mut suite, &desk, &table.reference_model);
    early_termination(&mut suite, &desk, &variable);

    println!(
        "acceptance: {} passed, {} failed, {:.0}s",
        suite.passed,
        suite.failed,
        secs(started)
    );
    if suite.failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn solver_convergence(suite: &mut Suite) {
    let t = Instant::now();
    let dx = [1e-3, 5e-4, 2e-4, 1e-4];
    let study = convergence_study(1.34, &dx, 1e-6, 1e-3).expect("convergence study runs");
    let elapsed = secs(t);
    let order = study.order.unwrap_or(f64::NAN);
    let spatial = spatial_convergence_study(1.34, &dx, 1e-6, 1e-3, 4).expect("spatial study runs");
    let pass = (1.7..=2.3).contains(&order) && elapsed < 60.0;
    suite.record(
        1,
        "solver convergence order vs analytic, D=1.34 dt=1e-6 t=1e-3",
        pass,
        format!("fitted order {order:.3} (want [1.7, 2.3]), {elapsed:.1}s"),
        &[
            format!("errors vs analytic: {:?}", study.errors),
            format!(
                "same dt, errors vs a 4x finer grid: {:?}, order {:.3}",
                spatial.errors,
                spatial.order.unwrap_or(f64::NAN)
            ),
        ],
    );
}

/// Composite Simpson on [0, L] of erfc(x / (2 sqrt(Dt))), with L cut where
/// the integrand drops below 1e-300 or at 1.
fn quadrature(d: f64, t: f64) -> f64 {
    let s = 2.0 * (d * t).sqrt();
    let upper = (40.0 * s).min(1.0);
    let n = 200_000;
    let h = upper / n as f64;
    let f = |x: f64| statrs::function::erf::erfc(x / s);
    let mut sum = f(0.0) + f(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    sum * h / 3.0
}

fn analytic_oracle(suite: &mut Suite) {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for i in 0..5 {
        let d = 1.0 + 0.5 * i as f64;
        for j in 0..4 {
            let t = 1e-6 * 10f64.powf(j as f64);
            worst = worst.max((analytic_concentration(d, t) - quadrature(d, t)).abs());
            points += 1;
        }
    }
    suite.record(
        2,
        "analytic integral vs quadrature",
        worst <= 1e-9,
        format!("max |difference| {worst:.2e} over {points} (D, t) points (want <= 1e-9)"),
        &[],
    );
}

fn gradient_integrity(suite: &mut Suite) {
    let mut details = Vec::new();
    let mut pass = true;
    for family in [Family::Seq2seq, Family::StateTransition] {
        let devs = toy_gradient_check(family, 0, GRAD_CHECK_PROBE).expect("gradient check runs");
        let worst = devs.iter().max_by(|a, b| a.max_rel.total_cmp(&b.max_rel)).expect("groups");
        let bad = devs.iter().filter(|d| !(d.max_rel <= GRAD_CHECK_TOLERANCE)).count();
        pass &= bad == 0;
        details.push(format!(
            "{family:?}: probe {GRAD_CHECK_PROBE:e}, worst {} at {:.2e}, {bad}/{} groups over tolerance",
            worst.name,
            worst.max_rel,
            devs.len()
        ));
        let coarse = toy_gradient_check(family, 0, 1e-4).expect("gradient check runs");
        let coarse_worst = coarse.iter().map(|d| d.max_rel).fold(0.0, f64::max);
        details.push(format!("{family:?}: probe 1e-4, worst {coarse_worst:.2e}"));
    }
    suite.record(
        6,
        "gradient check, both families, 2-sequence 10-step toy",
        pass,
        format!("tolerance {GRAD_CHECK_TOLERANCE:e}"),
        &details,
    );
}

fn property_suites(suite: &mut Suite) {
    let mut failures = Vec::new();
    let mut rng = RngStream::new(2024, 0);
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    // GRU states from zero stay strictly inside (-1, 1)
    let mut inside = true;
    for trial in 0..20 {
        let model = Seq2SeqModel::new(Seq2SeqArch::diffusion(2, 1), &mut RngStream::new(trial, 3)).unwrap();
        let len = 1 + rng.int_inclusive(0, 199);
        let inputs: Vec<Vec<f64>> = (0..len).map(|_| (0..3).map(|_| 10.0 * rng.uniform() - 5.0).collect()).collect();
        let latent = model.encode(&inputs).unwrap();
        inside &= latent.layers.iter().flatten().all(|h| h.abs() < 1.0);
    }
    check("GRU state bound", inside);

    // discrete maximum principle
    let mut bounded = true;
    for _ in 0..10 {
        let d = 1.0 + 2.0 * rng.uniform();
        let dx = 10f64.powf(-2.0 - rng.uniform());
        let mut run = DiffusionRun::new(DiffusionConfig::new(d, dx, 1e-5, 200)).unwrap();
        while !run.is_finished() {
            run.advance().unwrap();
            bounded &= run.field().iter().all(|&c| (0.0..=1.0).contains(&c));
        }
    }
    check("maximum principle", bounded);

    // scaler roundtrip
    let seqs: Vec<SimulationSequence> = (0..5)
        .map(|i| {
            seqsurrogate::diffusion::simulate_with_id(&DiffusionConfig::new(1.0 + i as f64 * 0.4, 1e-2, 1e-5, 50), i)
                .unwrap()
        })
        .collect();
    let scaler = Scaler::fit(&seqs).unwrap();
    let mut roundtrip = true;
    for s in &seqs {
        let back = scaler.invert(&scaler.apply(s).unwrap()).unwrap();
        for (a, b) in s.qoi.iter().flatten().zip(back.qoi.iter().flatten()) {
            roundtrip &= (a - b).abs() <= 1e-12 * a.abs().max(1e-300) || a == b;
        }
    }
    check("scaler roundtrip", roundtrip);

    // LHS stratification for every n up to 500
    let space = ParamSpace::new(vec![
        ParamDim::new("a", 0.0, 1.0, Scale::Linear),
        ParamDim::new("b", 1e-5, 1e-3, Scale::Log),
    ]);
    let mut stratified = true;
    for n in 1..=500 {
        let pts = space.sample_lhs(n, &mut rng).unwrap();
        for (k, dim) in space.dims.iter().enumerate() {
            let mut hit = vec![0usize; n];
            for p in &pts {
                let u = match dim.scale {
                    Scale::Linear => (p[k] - dim.lower) / (dim.upper - dim.lower),
                    Scale::Log => (p[k] / dim.lower).ln() / (dim.upper / dim.lower).ln(),
                };
                hit[((u * n as f64) as usize).min(n - 1)] += 1;
            }
            stratified &= hit.iter().all(|&h| h == 1);
        }
    }
    check("LHS stratification", stratified);

    // tridiagonal residual
    let mut residual: f64 = 0.0;
    for _ in 0..20 {
        let n = 2 + rng.int_inclusive(0, 300);
        let lower: Vec<f64> = (0..n - 1).map(|_| -rng.uniform()).collect();
        let upper: Vec<f64> = (0..n - 1).map(|_| -rng.uniform()).collect();
        let diag: Vec<f64> = (0..n).map(|_| 2.0 + rng.uniform()).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.uniform() - 0.5).collect();
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..n {
            let mut r = diag[i] * x[i] - rhs[i];
            if i > 0 {
                r += lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                r += upper[i] * x[i + 1];
            }
            residual = residual.max(r.abs());
        }
    }
    check("tridiagonal residual", residual <= 1e-10);

    // serialization roundtrip, both families
    let dir = tempfile::tempdir().unwrap();
    let models = [
        Surrogate::Seq2Seq(Seq2SeqModel::new(Seq2SeqArch::diffusion(2, 1), &mut RngStream::new(5, 3)).unwrap()),
        Surrogate::StateTransition(
            StateTransitionModel::new(DenseArch::diffusion(2, 1), &mut RngStream::new(5, 3)).unwrap(),
        ),
    ];
    let mut exact = true;
    for m in &models {
        let p = dir.path().join("m.json");
        save_model(m, &p).unwrap();
        let loaded = load_model(&p).unwrap();
        exact &= &loaded == m && to_bytes(&loaded) == to_bytes(m);
    }
    check("serialization roundtrip", exact);

    // seed determinism of generate, train and eval
    let small = GenerationConfig {
        n: 6,
        dt: 1e-5,
        n_steps: 40,
        space: seqsurrogate::data::diffusion_space(1.0, 3.0, 1e-3, 1e-2, Scale::Log),
        ..GenerationConfig::diffusion_default(9)
    };
    let dataset_bytes = || {
        let seqs = simulate_dataset(&small, 1).unwrap();
        let p = dir.path().join("d.jsonl");
        write_dataset(&p, &seqs).unwrap();
        (seqs, std::fs::read(&p).unwrap())
    };
    let (seqs_a, bytes_a) = dataset_bytes();
    let (_, bytes_b) = dataset_bytes();
    let mut cfg = TrainConfig::seq2seq_default();
    cfg.n_epochs = 3;
    cfg.hidden_units = 4;
    let train_eval = || {
        let (m, _) = train_seq2seq(&seqs_a, &cfg).unwrap();
        let scaler = m.scaler.clone().unwrap();
        let m = Surrogate::Seq2Seq(m);
        let mut csv = Vec::new();
        evaluate_test(&m, &scaler, &seqs_a, 1, "").unwrap().write_csv(&mut csv).unwrap();
        (to_bytes(&m), csv)
    };
    check("seed determinism", bytes_a == bytes_b && train_eval() == train_eval());

    let pass = failures.is_empty();
    suite.record(
        7,
        "property suites",
        pass,
        if pass {
            "GRU bound, maximum principle, scaler roundtrip, LHS strata, tridiagonal residual, serialization, determinism".into()
        } else {
            format!("failed: {}", failures.join(", "))
        },
        &[format!("tridiagonal max residual {residual:.1e}")],
    );
}

/// The desk-scale database: 1000 runs at the paper settings, every tenth
/// step kept, split 80/20.
struct DeskData {
    train: Vec<SimulationSequence>,
    test: Vec<SimulationSequence>,
}

impl DeskData {
    fn build() -> Self {
        let t = Instant::now();
        let cfg = GenerationConfig::diffusion_default(0);
        let seqs: Vec<SimulationSequence> = simulate_dataset(&cfg, 1)
            .expect("dataset generates")
            .iter()
            .map(|s| downsample(s, DESK_STRIDE))
            .collect();
        let ids: Vec<u64> = seqs.iter().map(|s| s.id).collect();
        let split = split_dataset(&ids, 0.8, &mut RngStream::new(cfg.seed, streams::SPLIT)).unwrap();
        println!(
            "info: generated {} runs of {} steps, {} train / {} test, {:.0}s",
            seqs.len(),
            seqs[0].len(),
            split.train.len(),
            split.test.len(),
            secs(t)
        );
        Self {
            train: select(&seqs, &split.train).unwrap(),
            test: select(&seqs, &split.test).unwrap(),
        }
    }
}

struct TableOutcome {
    reference_model: Surrogate,
}

fn table_reproduction(suite: &mut Suite, desk: &DeskData) -> TableOutcome {
    let mut details = Vec::new();
    let mut good_seeds = 0;
    let mut progress_ok = true;
    let mut reference = None;
    for seed in 0..3 {
        let t = Instant::now();
        let mut s2s_cfg = TrainConfig::seq2seq_default();
        s2s_cfg.n_epochs = DESK_SEQ2SEQ_EPOCHS;
        s2s_cfg.seed = seed;
        let (s2s, s2s_hist) = train_seq2seq(&desk.train, &s2s_cfg).expect("seq2seq trains");
        let s2s_time = secs(t);
        let t = Instant::now();
        let mut st_cfg = TrainConfig::state_transition_default();
        st_cfg.seed = seed;
        let (st, st_hist) = train_state_transition(&desk.train, &st_cfg).expect("state transition trains");
        let st_time = secs(t);
        let s2s = Surrogate::Seq2Seq(s2s);
        let st = Surrogate::StateTransition(st);
        let s2s_report = evaluate_test(&s2s, s2s.scaler().unwrap(), &desk.test, 1, "").unwrap();
        let st_report = evaluate_test(&st, st.scaler().unwrap(), &desk.test, 1, "").unwrap();
        let (a, b) = (s2s_report.stats, st_report.stats);
        let ok = a.median <= 0.05 && a.median < b.median;
        good_seeds += ok as usize;
        for h in [&s2s_hist, &st_hist] {
            progress_ok &= h.final_loss() <= h.first_loss();
        }
        details.push(format!(
            "seed {seed}: seq2seq median {:.4} mean {:.4} sd {:.4} ({s2s_time:.0}s) | state-transition median {:.4} mean {:.4} sd {:.4} ({st_time:.0}s) | {}",
            a.median,
            a.mean,
            a.sd,
            b.median,
            b.mean,
            b.sd,
            if ok { "ok" } else { "miss" }
        ));
        details.push(format!(
            "seed {seed}: training loss seq2seq {:.2e} -> {:.2e}, state-transition {:.2e} -> {:.2e}",
            s2s_hist.first_loss().unwrap(),
            s2s_hist.final_loss().unwrap(),
            st_hist.first_loss().unwrap(),
            st_hist.final_loss().unwrap()
        ));
        if seed == 0 {
            reference = Some(s2s);
        }
    }
    details.push(format!("final epoch loss <= first epoch loss on every run: {progress_ok}"));
    suite.record(
        3,
        "desk-scale model comparison",
        good_seeds >= 2,
        format!("{good_seeds}/3 seeds with seq2seq median <= 0.05 and below state-transition (want >= 2)"),
        &details,
    );
    TableOutcome {
        reference_model: reference.expect("seed 0 trained"),
    }
}

fn train_variable_length(desk: &DeskData) -> Surrogate {
    let t = Instant::now();
    let mut cfg = TrainConfig::seq2seq_default();
    cfg.n_epochs = DESK_SEQ2SEQ_EPOCHS;
    cfg.input_mode = InputMode::Variable { min_len: 10, max_len: 90 };
    let (model, hist) = train_seq2seq(&desk.train, &cfg).expect("variable-length model trains");
    println!(
        "info: variable-length seq2seq trained, loss {:.2e} -> {:.2e}, {:.0}s",
        hist.first_loss().unwrap(),
        hist.final_loss().unwrap(),
        secs(t)
    );
    Surrogate::Seq2Seq(model)
}

fn input_length(suite: &mut Suite, desk: &DeskData, model: &Surrogate) {
    let lengths: Vec<usize> = (10..=90).step_by(10).collect();
    let table = input_length_study(model, model.scaler().unwrap(), &desk.test, &lengths).expect("study runs");
    let xs = table.xs();
    let medians = table.medians();
    let rho = spearman(&xs, &medians).unwrap_or(f64::NAN);
    let first = table.row(10.0).unwrap().median_iae;
    let last = table.row(90.0).unwrap().median_iae;
    // knee: first length after which every further 10-step gain is under a
    // tenth of the first gain
    let drops: Vec<f64> = medians.windows(2).map(|w| w[0] - w[1]).collect();
    let knee = drops
        .iter()
        .position(|&d| drops[0] > 0.0 && d < 0.1 * drops[0])
        .map(|i| lengths[i]);
    let pass = rho <= -0.8 && last < 0.5 * first;
    suite.record(
        4,
        "input-length study",
        pass,
        format!("Spearman {rho:.3} (want <= -0.8), median at 90 / at 10 = {:.3} (want < 0.5)", last / first),
        &[
            format!("medians by length: {}", medians.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(", ")),
            format!("knee (reported only): {knee:?}"),
        ],
    );
}

fn extrapolation(suite: &mut Suite, _desk: &DeskData, model: &Surrogate) {
    let setup = TrajectorySetup {
        diffusivity: 1.34,
        dt: 1e-6,
        n_steps: 1000,
        stride: DESK_STRIDE,
    };
    let model_dx = [1e-5, 5e-6, 2e-6, 1e-6];
    let result = extrapolation_study(model, model.scaler().unwrap(), &setup, &model_dx, &SOLVER_REFERENCE_DX)
        .expect("study runs");
    let at = |t: &seqsurrogate::evaluation::StudyTable, x: f64| t.row(x).map_or(f64::NAN, |r| r.median_iae);
    let model_err = at(&result.model, 1e-6);
    let solver_err = at(&result.solver, 1e-3);
    suite.record(
        5,
        "extrapolation below the training dx range",
        model_err < solver_err,
        format!("model IAE at dx=1e-6 {model_err:.3e} vs solver IAE at dx=1e-3 {solver_err:.3e}"),
        &[
            format!(
                "model: {}",
                result.model.rows.iter().map(|r| format!("dx={:e}: {:.3e}", r.x, r.median_iae)).collect::<Vec<_>>().join(", ")
            ),
            format!(
                "solver: {}",
                result.solver.rows.iter().map(|r| format!("dx={:e}: {:.3e}", r.x, r.median_iae)).collect::<Vec<_>>().join(", ")
            ),
            format!("solver fitted order vs analytic: {:.3}", result.solver_order.unwrap_or(f64::NAN)),
        ],
    );
}

fn early_termination(suite: &mut Suite, desk: &DeskData, model: &Surrogate) {
    let scaler = model.scaler().unwrap().clone();
    let live = |seq: &SimulationSequence| {
        let cfg = DiffusionConfig::new(seq.param("D").unwrap(), seq.param("dx").unwrap(), 1e-6, 1000);
        LiveSource::new(seq.id, cfg, DESK_STRIDE).unwrap()
    };

    let oracle = OraclePredictor::new(&scaler, desk.test.iter()).unwrap();
    let oracle_ok = desk.test.iter().all(|s| {
        let t = early_stop_monitor(&mut live(s), &oracle, &scaler, 50, 10, 1e-12).unwrap();
        t.checkpoints.len() == 1 && t.checkpoints[0].decision == Decision::Terminate
    });

    let constant = ConstantPredictor { value: 0.5, qoi_dim: 1 };
    let constant_ok = desk.test.iter().take(40).all(|s| {
        let t = early_stop_monitor(&mut live(s), &constant, &scaler, 50, 10, 1e-4).unwrap();
        !t.terminated() && t.checkpoints.iter().all(|c| c.decision == Decision::Continue)
    });

    let t = Instant::now();
    let mut terminated = 0;
    let mut saved_steps = 0usize;
    let mut remainder_iae = Vec::new();
    for s in &desk.test {
        let mut source = live(s);
        let trace = early_stop_monitor(&mut source, model, &scaler, 50, 10, 0.02).unwrap();
        if let Some(rest) = &trace.remainder {
            terminated += 1;
            saved_steps += 1000 - source.solver_steps();
            let truth: Vec<Vec<f64>> =
                s.qoi[trace.observed.len()..].iter().map(|q| scaler.apply_qoi(2, q)).collect();
            if !rest.is_empty() {
                remainder_iae.push(seqsurrogate::evaluation::iae(rest, &truth).unwrap());
            }
        }
    }
    let fraction = terminated as f64 / desk.test.len() as f64;
    let stats = seqsurrogate::evaluation::summarize(&remainder_iae).ok();
    let pass = oracle_ok && constant_ok && fraction >= 0.5;
    suite.record(
        8,
        "early-termination monitor",
        pass,
        format!(
            "oracle terminates at first checkpoint: {oracle_ok}; constant stub always continues: {constant_ok}; trained model terminates {terminated}/{} = {fraction:.2} (want >= 0.5)",
            desk.test.len()
        ),
        &[
            match stats {
                Some(st) => format!(
                    "remainder IAE of terminated runs (reported only): median {:.4}, mean {:.4}, sd {:.4}",
                    st.median, st.mean, st.sd
                ),
                None => "no run terminated".into(),
            },
            format!("solver steps skipped: {saved_steps} of {}, {:.0}s", 1000 * desk.test.len(), secs(t)),
        ],
    );
    let _ = model.name();
}
