//! Central finite-difference gradient checks shared by the test targets.

use bioann::consolidation::{SiConfig, SiState};
use bioann::layers::{Contexts, Mode};
use bioann::model::{batch_cross_entropy, ActivationKind, Gradients, Mechanisms, Model, ModelConfig, ModelMode};
use bioann::numerics::rng::{stream, Purpose};
use bioann::numerics::{Matrix, Real};
use bioann::replay::replay_loss;
use rand::Rng;

const H: Real = 1e-5;
pub const TOL: Real = 1e-5;
pub const INSTANCES: u64 = 20;

/// Relative error with an absolute floor for gradients that vanish.
fn rel_err(a: Real, n: Real) -> Real {
    let scale = a.abs().max(n.abs());
    if scale < 1e-6 {
        (a - n).abs() / 1e-6
    } else {
        (a - n).abs() / scale
    }
}

fn random_matrix(rows: usize, cols: usize, lo: Real, hi: Real, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn view(t: &[Vec<Real>]) -> Vec<&[Real]> {
    t.iter().map(|v| v.as_slice()).collect()
}

struct Instance {
    model: Model,
    x: Matrix,
    labels: Vec<usize>,
    ctx: Option<Contexts>,
}

fn instance(seed: u64, bio: bool) -> Instance {
    let mut rng = stream(seed, Purpose::Init);
    let (n_in, n_classes, batch) = (5, 3, 4);
    let cfg = ModelConfig {
        mode: if bio { ModelMode::Bio } else { ModelMode::Standard },
        activation: if bio { ActivationKind::Kwta } else { ActivationKind::Relu },
        hidden: vec![6],
        k_ratio: vec![0.5],
        ..ModelConfig::default()
    };
    let mech = if bio { Mechanisms::all() } else { Mechanisms::none() };
    let model = Model::build(&cfg, &mech, &[0.0], n_in, n_classes, 2, &mut rng).unwrap();
    let x = random_matrix(batch, n_in, 0.0, 1.0, &mut rng);
    let labels = (0..batch).map(|_| rng.random_range(0..n_classes)).collect();
    let ctx = bio.then(|| {
        let a: Vec<Real> = (0..n_in).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<Real> = (0..n_in).map(|_| rng.random_range(0.0..1.0)).collect();
        Contexts::new(vec![a, b], vec![0, 1, 0, 1]).unwrap()
    });
    Instance { model, x, labels, ctx }
}

/// Loss plus the discrete choices (winners, segments) it depends on.
fn loss_and_pattern(inst: &Instance) -> (Real, Vec<Real>) {
    let mut rng = stream(0, Purpose::Dropout);
    let pass = inst.model.forward(&inst.x, inst.ctx.as_ref(), Mode::Eval, &mut rng).unwrap();
    let (loss, _) = batch_cross_entropy(&pass.logits, &inst.labels).unwrap();
    let mut pattern = Vec::new();
    for r in &pass.records {
        pattern.extend_from_slice(r.kwta_mask.as_slice());
        if let Some(s) = &r.selected_segments {
            pattern.extend(s.iter().map(|&v| v as Real));
        }
    }
    (loss, pattern)
}

/// Checks the loss gradient of every parameter of a one-hidden-layer model;
/// returns the number of coordinates compared.
pub fn check_model(bio: bool) -> Result<usize, String> {
    let mut checked = 0;
    for seed in 0..INSTANCES {
        let mut inst = instance(seed, bio);
        let mut rng = stream(0, Purpose::Dropout);
        let pass = inst.model.forward(&inst.x, inst.ctx.as_ref(), Mode::Eval, &mut rng).unwrap();
        let (_, g) = batch_cross_entropy(&pass.logits, &inst.labels).unwrap();
        let analytic = inst.model.backward(&pass, &g).unwrap();
        let (_, base_pattern) = loss_and_pattern(&inst);
        let lens: Vec<usize> = inst.model.params().iter().map(|p| p.len()).collect();
        for (gi, &len) in lens.iter().enumerate() {
            for i in 0..len {
                let orig = inst.model.params()[gi][i];
                inst.model.params_mut()[gi].values[i] = orig + H;
                let (lp, pp) = loss_and_pattern(&inst);
                inst.model.params_mut()[gi].values[i] = orig - H;
                let (lm, pm) = loss_and_pattern(&inst);
                inst.model.params_mut()[gi].values[i] = orig;
                // A perturbation that flips a winner crosses a kink; skip it.
                if pp != base_pattern || pm != base_pattern {
                    continue;
                }
                let numeric = (lp - lm) / (2.0 * H);
                let a = analytic.groups[gi][i];
                let e = rel_err(a, numeric);
                if e >= TOL {
                    return Err(format!("seed {seed} group {gi} index {i}: analytic {a} numeric {numeric} rel {e}"));
                }
                checked += 1;
            }
        }
    }
    if checked < 1000 {
        return Err(format!("only {checked} coordinates checked"));
    }
    Ok(checked)
}

/// Gradient of the SI penalty.
pub fn check_si_penalty() -> Result<(), String> {
    for seed in 0..INSTANCES {
        let inst = instance(seed, true);
        let mut rng = stream(seed, Purpose::Data);
        let specs = inst.model.param_specs();
        let theta0 = inst.model.snapshot();
        let mut si = SiState::new(SiConfig::default(), &specs, theta0.clone()).unwrap();
        let grads = Gradients {
            groups: specs.iter().map(|s| (0..s.len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        };
        let lrs: Vec<Real> = specs.iter().map(|_| 0.1).collect();
        si.accumulate_omega(&grads, &lrs).unwrap();
        let moved: Vec<Vec<Real>> = theta0
            .iter()
            .map(|g| g.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect())
            .collect();
        si.consolidate_task(&view(&moved)).unwrap();
        let theta: Vec<Vec<Real>> = moved
            .iter()
            .map(|g| g.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect())
            .collect();
        let mut analytic = Gradients::zeros(&specs);
        si.penalty(&view(&theta), Some(&mut analytic)).unwrap();
        let mut probe = theta.clone();
        for gi in 0..probe.len() {
            for i in 0..probe[gi].len() {
                let orig = probe[gi][i];
                probe[gi][i] = orig + H;
                let lp = si.penalty(&view(&probe), None).unwrap();
                probe[gi][i] = orig - H;
                let lm = si.penalty(&view(&probe), None).unwrap();
                probe[gi][i] = orig;
                let numeric = (lp - lm) / (2.0 * H);
                let a = analytic.groups[gi][i];
                let e = rel_err(a, numeric);
                if e >= TOL {
                    return Err(format!("seed {seed} group {gi} index {i}: analytic {a} numeric {numeric}"));
                }
            }
        }
    }
    Ok(())
}

/// Gradient of the replay loss w.r.t. the logits.
pub fn check_replay_loss() -> Result<(), String> {
    for seed in 0..INSTANCES {
        let mut rng = stream(seed, Purpose::Data);
        let (batch, classes) = (5, 4);
        let logits = random_matrix(batch, classes, -3.0, 3.0, &mut rng);
        let stored = random_matrix(batch, classes, -3.0, 3.0, &mut rng);
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        let alpha = rng.random_range(0.1..2.0);
        let beta = rng.random_range(0.0..2.0);
        let total = |l: &Matrix| {
            let (r, _) = replay_loss(l, &labels, &stored, alpha, beta).unwrap();
            r.classification + r.consistency
        };
        let (_, analytic) = replay_loss(&logits, &labels, &stored, alpha, beta).unwrap();
        let mut probe = logits.clone();
        for r in 0..batch {
            for c in 0..classes {
                let orig = probe.get(r, c);
                probe.set(r, c, orig + H);
                let lp = total(&probe);
                probe.set(r, c, orig - H);
                let lm = total(&probe);
                probe.set(r, c, orig);
                let numeric = (lp - lm) / (2.0 * H);
                let a = analytic.get(r, c);
                if rel_err(a, numeric) >= TOL {
                    return Err(format!("seed {seed} ({r},{c}): analytic {a} numeric {numeric}"));
                }
            }
        }
    }
    Ok(())
}
