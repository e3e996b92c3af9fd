//! Acceptance checks: one PASS/FAIL line per criterion.
//!
//! Criteria 1-8 are exact properties and fail the target when violated.
//! Criteria 9-12 train desk-scale networks on the IDX files under
//! `DATA_DIR` (default: the workspace `data/`); their outcome is reported,
//! and fails the target only with `BIOANN_STRICT=1`. Criterion 13 needs the
//! full 60k-sample MNIST and runs only with `BIOANN_FULL_SCALE=1`.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use bioann::cli::{build_stream, find_preset, main_with_args, ExperimentConfig};
use bioann::consolidation::{SiConfig, SiState};
use bioann::layers::{Contexts, DendriteBank, DropoutState, Mode};
use bioann::model::{Gradients, Mechanisms, Model, ModelConfig};
use bioann::numerics::rng::{stream, Purpose};
use bioann::numerics::{dot, Matrix, Real};
use bioann::plasticity::{cosine, hebbian_step, sgd_step, OptimizerConfig};
use bioann::replay::{reservoir_insert, ReplayBuffer, ReplayEntry};
use bioann::trainer::{run_stream, RunResult};
use common::gradcheck;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Hidden units per layer at desk scale.
const DESK_HIDDEN: usize = 256;
/// One pass over 60k samples is ~469 steps of 128; seven passes over the
/// 8k bundled digits give ~438.
const DESK_EPOCHS: usize = 7;

struct Report {
    hard_failures: usize,
    soft_failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, hard: bool, detail: String) {
        println!("criterion {id:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            if hard {
                self.hard_failures += 1;
            } else {
                self.soft_failures += 1;
            }
        }
    }
}

fn criterion_1() -> (bool, String) {
    let mut rng = stream(1, Purpose::Init);
    let cfg = ModelConfig {
        hidden: vec![24, 16],
        k_ratio: vec![0.25, 0.25],
        ..ModelConfig::default()
    };
    let mut model = Model::build(&cfg, &Mechanisms::all(), &[0.0, 0.0], 12, 4, 3, &mut rng).unwrap();
    let specs = model.param_specs();
    let opt = OptimizerConfig::default();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut min: Real = Real::INFINITY;
    for step in 0..1000 {
        let grads = Gradients {
            groups: specs
                .iter()
                .map(|s| (0..s.len).map(|_| normal.sample(&mut rng) as Real).collect())
                .collect(),
        };
        sgd_step(&mut model.params_mut(), &grads, &opt, step % 3).unwrap();
        for (s, p) in specs.iter().zip(model.params()) {
            if s.kind.sign_constrained() {
                min = min.min(p.iter().copied().fold(Real::INFINITY, Real::min));
            }
        }
    }
    (min >= 0.0, format!("min Dale weight over 1000 steps = {min:e}"))
}

fn criterion_2() -> (bool, String) {
    let results = [
        ("bio layer", gradcheck::check_model(true).map(|_| ())),
        ("standard layer", gradcheck::check_model(false).map(|_| ())),
        ("SI penalty", gradcheck::check_si_penalty()),
        ("replay loss", gradcheck::check_replay_loss()),
    ];
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}")))
        .collect();
    let detail = if failed.is_empty() {
        format!(
            "relative error < {:e} on {} instances each of bio layer, standard layer, SI penalty, replay loss",
            gradcheck::TOL,
            gradcheck::INSTANCES
        )
    } else {
        failed.join("; ")
    };
    (failed.is_empty(), detail)
}

fn criterion_3() -> (bool, String) {
    let mut rng = stream(3, Purpose::Init);
    let cfg = ModelConfig {
        hidden: vec![40],
        k_ratio: vec![0.2],
        ..ModelConfig::default()
    };
    let mut instances = 0;
    for trial in 0..200 {
        let mut model = Model::build(&cfg, &Mechanisms::all(), &[1.0], 10, 3, 2, &mut rng).unwrap();
        let layer = &mut model.hidden[0];
        let n = layer.n_out();
        let k = match layer.activation {
            bioann::layers::Activation::Kwta { k } => k,
            _ => unreachable!(),
        };
        layer.dropout.keep_probs = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let x = Matrix::new(8, 10, (0..80).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let ctx = Contexts::new(
            vec![(0..10).map(|_| rng.random_range(0.0..1.0)).collect(), (0..10).map(|_| rng.random_range(0.0..1.0)).collect()],
            (0..8).map(|s| s % 2).collect(),
        )
        .unwrap();
        let (_, rec) = layer.forward(&x, Some(&ctx), Mode::Train { dropout: true }, &mut rng).unwrap();
        let survivors = rec.dropout_mask.iter().filter(|&&m| m).count();
        for s in 0..8 {
            let winners: Vec<usize> = (0..n).filter(|&j| rec.kwta_mask.get(s, j) == 1.0).collect();
            if winners.len() != k.min(survivors) {
                return (false, format!("trial {trial}: {} winners, expected {}", winners.len(), k.min(survivors)));
            }
            if winners.iter().any(|&j| !rec.dropout_mask[j]) {
                return (false, format!("trial {trial}: a dropped unit won"));
            }
            let value = |j: usize| rec.pre_mod.get(s, j) * rec.gate(s, j);
            let weakest = winners.iter().map(|&j| value(j)).fold(Real::INFINITY, Real::min);
            let strongest_loser = (0..n)
                .filter(|&j| rec.dropout_mask[j] && rec.kwta_mask.get(s, j) == 0.0)
                .map(value)
                .fold(Real::NEG_INFINITY, Real::max);
            if weakest < strongest_loser {
                return (false, format!("trial {trial}: a surviving loser beats a winner"));
            }
        }
        instances += 1;
    }
    (true, format!("exact k among dropout survivors on {instances} randomized layers"))
}

fn criterion_4() -> (bool, String) {
    let mut rng = stream(4, Purpose::Init);
    let mut worst: Real = 0.0;
    let mut rho_zero_ok = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..50);
        let rho = rng.random_range(0.0..10.0);
        let mut d = DropoutState::new(n, rho);
        d.counts = (0..n).map(|_| rng.random_range(0..1000) as Real).collect();
        d.refresh_keep_probs();
        let max = d.counts.iter().copied().fold(0.0, Real::max);
        for (p, a) in d.keep_probs.iter().zip(&d.counts) {
            let expected = if max > 0.0 { (-a / max * rho).exp() } else { 1.0 };
            worst = worst.max((p - expected).abs());
        }
        d.rho = 0.0;
        d.refresh_keep_probs();
        rho_zero_ok &= d.keep_probs.iter().all(|&p| p == 1.0);
    }
    (
        worst <= 1e-12 && rho_zero_ok,
        format!("max deviation from closed form {worst:e}; rho=0 gives all ones: {rho_zero_ok}"),
    )
}

fn criterion_5() -> (bool, String) {
    let mut rng = stream(5, Purpose::Init);
    let dim = 16;
    let (mut worst_cos, mut norm_lo, mut norm_hi): (Real, Real, Real) = (1.0, Real::INFINITY, 0.0);
    for _ in 0..10 {
        let c: Vec<Real> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut u: Vec<Real> = (0..dim).map(|_| rng.random_range(-0.25..0.25)).collect();
        if dot(&u, &c) < 0.0 {
            // The rule keeps the response's sign; start on the positive side.
            u.iter_mut().for_each(|v| *v = -*v);
        }
        let mut bank = DendriteBank::new(1, 1, dim, u).unwrap();
        for _ in 0..10_000 {
            hebbian_step(&mut bank, &[&c], 0.01).unwrap();
        }
        let w = bank.weights();
        worst_cos = worst_cos.min(cosine(w, &c));
        let norm = dot(w, w).sqrt();
        norm_lo = norm_lo.min(norm);
        norm_hi = norm_hi.max(norm);
    }
    (
        worst_cos > 0.999 && norm_lo >= 0.99 && norm_hi <= 1.01,
        format!("min cosine {worst_cos:.6}, norm in [{norm_lo:.6}, {norm_hi:.6}] after 1e4 steps at eta_h=0.01"),
    )
}

fn criterion_6() -> (bool, String) {
    let (capacity, offered, trials) = (10usize, 100usize, 100_000usize);
    let mut rng = stream(6, Purpose::Reservoir);
    let mut included = vec![0usize; offered];
    for _ in 0..trials {
        let mut buf = ReplayBuffer::new(capacity);
        for y in 0..offered {
            reservoir_insert(&mut buf, ReplayEntry { x: vec![], y, logits: vec![] }, &mut rng).unwrap();
        }
        for e in buf.entries() {
            included[e.y] += 1;
        }
    }
    let p = capacity as f64 / offered as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    let z = |i: usize| ((included[i] as f64 / trials as f64) - p).abs() / se;
    // First, middle and last offers cover the fill phase, replacement and the
    // final draw; the maximum over all items is informational only, since
    // one of 100 items exceeds 3 SE about a quarter of the time by chance.
    let probes = [0, offered / 2, offered - 1];
    let worst = probes.iter().map(|&i| z(i)).fold(0.0, f64::max);
    let all = (0..offered).map(z).fold(0.0, f64::max);
    (
        worst <= 3.0,
        format!(
            "B/N = {p}; items {probes:?} within {worst:.2} SE over {trials} trials (max over all {offered}: {all:.2})"
        ),
    )
}

fn criterion_7() -> (bool, String) {
    let mut rng = stream(7, Purpose::Init);
    let cfg = ModelConfig {
        hidden: vec![12],
        k_ratio: vec![0.5],
        ..ModelConfig::default()
    };
    let model = Model::build(&cfg, &Mechanisms::all(), &[0.0], 6, 3, 2, &mut rng).unwrap();
    let specs = model.param_specs();
    let theta0 = model.snapshot();
    let mut si = SiState::new(SiConfig::default(), &specs, theta0.clone()).unwrap();
    let zero: Vec<Vec<bool>> = specs.iter().map(|s| (0..s.len).map(|_| rng.random_bool(0.3)).collect()).collect();
    let lrs: Vec<Real> = specs.iter().map(|_| 0.3).collect();
    for _ in 0..50 {
        let grads = Gradients {
            groups: zero
                .iter()
                .map(|z| z.iter().map(|&is_zero| if is_zero { 0.0 } else { rng.random_range(-1.0..1.0) }).collect())
                .collect(),
        };
        si.accumulate_omega(&grads, &lrs).unwrap();
    }
    let moved: Vec<Vec<Real>> = theta0.iter().map(|g| g.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect()).collect();
    let view: Vec<&[Real]> = moved.iter().map(|v| v.as_slice()).collect();
    si.consolidate_task(&view).unwrap();
    let leaked = zero
        .iter()
        .zip(&si.big_omega)
        .flat_map(|(z, o)| z.iter().zip(o))
        .filter(|(&is_zero, &o)| is_zero && o != 0.0)
        .count();
    let at_ref = si.penalty(&view, None).unwrap();
    (
        leaked == 0 && at_ref == 0.0,
        format!("{leaked} zero-gradient parameters with importance; penalty at reference = {at_ref:e}"),
    )
}

fn data_dir() -> PathBuf {
    std::env::var_os("DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn criterion_8() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.toml");
    std::fs::write(
        &cfg_path,
        "[training]\nepochs = 1\nmax_train_per_task = 512\nmax_test_per_task = 256\n",
    )
    .unwrap();
    let data = data_dir();
    let mut csvs = Vec::new();
    for attempt in 0..2 {
        let out = dir.path().join(format!("out{attempt}"));
        let args: Vec<String> = vec![
            "bioann".into(),
            "run".into(),
            "--preset".into(),
            "table1-perm5-bioann".into(),
            "--config".into(),
            cfg_path.display().to_string(),
            "--n-tasks".into(),
            "2".into(),
            "--hidden".into(),
            "32".into(),
            "--seeds".into(),
            "3".into(),
            "--data-dir".into(),
            data.display().to_string(),
            "--out-dir".into(),
            out.display().to_string(),
            "--run-id".into(),
            "det".into(),
        ];
        let code = main_with_args(args);
        if code != 0 {
            return (false, format!("CLI exited with {code}"));
        }
        let metrics = std::fs::read(out.join("det_seed3.csv")).unwrap();
        let steps = std::fs::read(out.join("det_seed3_steps.csv")).unwrap();
        csvs.push((metrics, steps));
    }
    let same = csvs[0] == csvs[1];
    (same, format!("two CLI runs, metrics CSV {} bytes, identical: {same}", csvs[0].0.len()))
}

/// Runs a preset at desk scale after `tweak`.
fn desk_run(preset: &str, tweak: impl FnOnce(&mut ExperimentConfig)) -> Result<RunResult, String> {
    let mut cfg = find_preset(preset).ok_or(format!("no preset {preset}"))?.config;
    cfg.model.hidden = vec![DESK_HIDDEN; cfg.model.hidden.len()];
    cfg.model.inhibitory = None;
    cfg.training.epochs = DESK_EPOCHS;
    cfg.data_dir = Some(data_dir());
    tweak(&mut cfg);
    cfg.validate().map_err(|e| e.to_string())?;
    let seed = cfg.seeds[0];
    let stream = build_stream(&cfg, seed).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let out = run_stream(&stream, &cfg.run_config(), seed, &cfg.run_id(), None).map_err(|e| e.to_string())?;
    eprintln!(
        "  {} ({:?}{}): average accuracy {:.2}, forgetting {:.2} in {:.0}s",
        cfg.run_id(),
        cfg.scenario,
        cfg.n_tasks,
        100.0 * out.result.average_accuracy,
        100.0 * out.result.forgetting,
        started.elapsed().as_secs_f64()
    );
    Ok(out.result)
}

fn pct(x: Real) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn criterion_9() -> (bool, String) {
    let no_er = match desk_run("table1-seq5-sgd", |_| {}) {
        Ok(r) => r.average_accuracy,
        Err(e) => return (false, e),
    };
    let er = match desk_run("table1-seq5-er", |_| {}) {
        Ok(r) => r.average_accuracy,
        Err(e) => return (false, e),
    };
    (
        no_er < 0.30 && er > 0.75,
        format!("Seq-MNIST 5 tasks: without ER {} (< 30%), with ER {} (> 75%)", pct(no_er), pct(er)),
    )
}

fn criterion_10(context_line: &mut Option<(bool, String)>) -> (bool, String) {
    let bio = match desk_run("table1-perm5-bioann", |_| {}) {
        Ok(r) => r,
        Err(e) => return (false, e),
    };
    *context_line = Some((
        bio.context_accuracy > 0.95,
        format!("Perm-MNIST 5 tasks context inference accuracy {} (> 95%)", pct(bio.context_accuracy)),
    ));
    let sgd = match desk_run("table1-perm5-sgd", |_| {}) {
        Ok(r) => r.average_accuracy,
        Err(e) => return (false, e),
    };
    let gap = bio.average_accuracy - sgd;
    (
        gap >= 0.10,
        format!(
            "Perm-MNIST 5 tasks: Bio-ANN {} vs SGD {}, gap {:.2} points (>= 10)",
            pct(bio.average_accuracy),
            pct(sgd),
            100.0 * gap
        ),
    )
}

fn criterion_11() -> (bool, String) {
    let mut kl = Vec::new();
    for rho in [0.1, 1.0, 5.0] {
        match desk_run("table1-perm5-hd", |c| {
            c.n_tasks = 2;
            c.dropout.rho = vec![rho; 2];
            c.run_id = Some(format!("hd-rho{rho}"));
        }) {
            Ok(r) => kl.push(r.activation_overlap[0][1]),
            Err(e) => return (false, e),
        }
    }
    let increasing = kl.windows(2).all(|w| w[1] > w[0]);
    (
        increasing,
        format!(
            "2-task Perm-MNIST symmetric KL at rho 0.1/1/5: {:.4} / {:.4} / {:.4} (strictly increasing)",
            kl[0], kl[1], kl[2]
        ),
    )
}

fn criterion_12() -> (bool, String) {
    let mut forgetting = Vec::new();
    for theta in [8.0, 32.0] {
        match desk_run("table1-rot5-hd", |c| {
            c.theta_inc = theta;
            c.dropout.rho = vec![5.0; 2];
            c.run_id = Some(format!("rot5-theta{theta}"));
        }) {
            Ok(r) => forgetting.push(r.forgetting),
            Err(e) => return (false, e),
        }
    }
    (
        forgetting[1] > forgetting[0],
        format!(
            "Rot-MNIST 5 tasks, rho 5: forgetting {:.2} at theta_inc 32 vs {:.2} at 8",
            100.0 * forgetting[1],
            100.0 * forgetting[0]
        ),
    )
}

fn criterion_13() -> (bool, String) {
    let full = |preset: &str| -> Result<Real, String> {
        let mut cfg = find_preset(preset).ok_or(format!("no preset {preset}"))?.config;
        cfg.data_dir = Some(data_dir());
        let stream = build_stream(&cfg, cfg.seeds[0]).map_err(|e| e.to_string())?;
        if stream.tasks[0].train.len() < 60_000 {
            return Err(format!("needs the 60k-sample MNIST, found {}", stream.tasks[0].train.len()));
        }
        let out = run_stream(&stream, &cfg.run_config(), cfg.seeds[0], &cfg.run_id(), None).map_err(|e| e.to_string())?;
        Ok(out.result.average_accuracy)
    };
    let (perm, rot) = match (full("table1-perm10-bioann"), full("table1-rot10-bioann")) {
        (Ok(p), Ok(r)) => (p, r),
        (Err(e), _) | (_, Err(e)) => return (false, e),
    };
    (
        (100.0 * perm - 97.07).abs() <= 1.5 && (100.0 * rot - 94.64).abs() <= 2.0,
        format!("Perm-MNIST 10 {} (97.07 ± 1.5), Rot-MNIST 10 {} (94.64 ± 2.0)", pct(perm), pct(rot)),
    )
}

fn main() {
    let strict = std::env::var("BIOANN_STRICT").is_ok_and(|v| v == "1");
    let mut report = Report {
        hard_failures: 0,
        soft_failures: 0,
    };
    let exact: [(&str, fn() -> (bool, String)); 8] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7", criterion_7),
        ("8", criterion_8),
    ];
    for (id, f) in exact {
        let (pass, detail) = f();
        report.line(id, pass, true, detail);
    }

    let mut context = None;
    let (pass, detail) = criterion_9();
    report.line("9", pass, false, detail);
    let (pass, detail) = criterion_10(&mut context);
    report.line("10", pass, false, detail);
    if let Some((pass, detail)) = context {
        report.line("10b", pass, false, detail);
    }
    let (pass, detail) = criterion_11();
    report.line("11", pass, false, detail);
    let (pass, detail) = criterion_12();
    report.line("12", pass, false, detail);

    if std::env::var("BIOANN_FULL_SCALE").is_ok_and(|v| v == "1") {
        let (pass, detail) = criterion_13();
        report.line("13", pass, false, detail);
    } else {
        println!("criterion 13: SKIPPED full-scale run (set BIOANN_FULL_SCALE=1 with the 60k-sample MNIST)");
    }

    println!(
        "acceptance: {} exact failure(s), {} desk-scale failure(s)",
        report.hard_failures, report.soft_failures
    );
    if report.hard_failures > 0 || (strict && report.soft_failures > 0) {
        std::process::exit(1);
    }
}
