//! The continual-learning loop: trains a [`Model`] task by task over a
//! [`TaskStream`], evaluates after every task and collects diagnostics.

mod checkpoint;
pub mod metrics;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::consolidation::{SiConfig, SiState};
use crate::context::{compute_prototype, ContextStore};
use crate::data::{Dataset, Interpolation, Task, TaskStream};
use crate::error::{Error, Result};
use crate::layers::{fired_counts, update_activation_counts, Contexts, Mode};
use crate::model::{batch_cross_entropy, Mechanisms, Model, ModelConfig};
use crate::numerics::rng::permutation;
use crate::numerics::{Matrix, Real, RngStreams};
use crate::plasticity::{clip_gradients, hebbian_step, scale_inhibitory_grads, sgd_step, OptimizerConfig};
use crate::replay::{replay_loss, ReplayBuffer, ReplayEntry};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use metrics::{activation_overlap, average_accuracy, forgetting, forward_transfer, mean_std, AccuracyMatrix};

/// Evaluation batches are chunked to bound memory.
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Train once on all tasks pooled (upper-bound baseline).
    pub joint: bool,
    /// Evaluate with each test sample's true task prototype instead of
    /// nearest-prototype inference.
    pub oracle_task_identity: bool,
    /// Also evaluate task `i+1` after training task `i`.
    pub forward_transfer: bool,
    /// Caps on samples per task (0 = all).
    pub max_train_per_task: usize,
    pub max_test_per_task: usize,
    pub interpolation: Interpolation,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 128,
            joint: false,
            oracle_task_identity: false,
            forward_transfer: true,
            max_train_per_task: 0,
            max_test_per_task: 0,
            interpolation: Interpolation::Bilinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutConfig {
    /// Heterogeneous-dropout strength per hidden layer.
    pub rho: Vec<Real>,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self { rho: vec![0.3, 0.3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub alpha: Real,
    pub beta: Real,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 500,
            alpha: 1.0,
            beta: 0.5,
        }
    }
}

/// Everything that shapes a single training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub mechanisms: Mechanisms,
    pub optimizer: OptimizerConfig,
    pub training: TrainingConfig,
    pub dropout: DropoutConfig,
    pub si: SiConfig,
    pub replay: ReplayConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate(&self.mechanisms)?;
        self.optimizer.validate()?;
        self.si.validate()?;
        if self.training.epochs == 0 || self.training.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.dropout.rho.len() != self.model.hidden.len() {
            return Err(Error::Config(format!(
                "dropout.rho has {} entries for {} hidden layers",
                self.dropout.rho.len(),
                self.model.hidden.len()
            )));
        }
        if self.dropout.rho.iter().any(|&r| !(r >= 0.0)) {
            return Err(Error::Config("rho must be >= 0".into()));
        }
        if self.mechanisms.er && self.replay.capacity == 0 {
            return Err(Error::Config("replay needs a positive capacity".into()));
        }
        if self.replay.alpha < 0.0 || self.replay.beta < 0.0 {
            return Err(Error::Config("alpha and beta must be >= 0".into()));
        }
        Ok(())
    }

    /// Consistency weight actually used (0 without CR).
    fn beta(&self) -> Real {
        if self.mechanisms.cr {
            self.replay.beta
        } else {
            0.0
        }
    }
}

/// Loss decomposition of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLog {
    pub task: usize,
    pub epoch: usize,
    pub step: usize,
    /// Cross-entropy on the current-task batch.
    pub loss_task: Real,
    /// `α·CE` on the replay batch.
    pub loss_er: Real,
    /// `β·MSE` between replayed and stored logits.
    pub loss_cr: Real,
    /// Synaptic Intelligence penalty.
    pub loss_sc: Real,
}

/// Training examples with the task each one belongs to.
struct TrainSet<'a> {
    data: &'a Dataset,
    task_of: Vec<usize>,
}

/// Mutable state of a run between tasks.
pub struct Trainer {
    pub cfg: RunConfig,
    pub model: Model,
    pub store: ContextStore,
    pub si: Option<SiState>,
    pub buffer: ReplayBuffer,
    pub rngs: RngStreams,
    /// Number of tasks trained so far.
    pub tasks_done: usize,
    pub steps: Vec<StepLog>,
}

impl Trainer {
    /// Fresh trainer for inputs of size `n_in`. `segments` is the number of
    /// dendritic segments when the config leaves it open.
    pub fn new(cfg: RunConfig, n_in: usize, n_classes: usize, segments: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rngs = RngStreams::new(seed);
        let segments = cfg.model.segments.unwrap_or(segments).max(1);
        let model = Model::build(
            &cfg.model,
            &cfg.mechanisms,
            &cfg.dropout.rho,
            n_in,
            n_classes,
            segments,
            &mut rngs.init,
        )?;
        let si = if cfg.mechanisms.si {
            Some(SiState::new(cfg.si.clone(), &model.param_specs(), model.snapshot())?)
        } else {
            None
        };
        let buffer = ReplayBuffer::new(cfg.replay.capacity);
        Ok(Self {
            cfg,
            model,
            store: ContextStore::new(),
            si,
            buffer,
            rngs,
            tasks_done: 0,
            steps: Vec::new(),
        })
    }

    fn uses_contexts(&self) -> bool {
        self.model.has_dendrites()
    }

    /// Stores the prototype of `task` if it is not known yet.
    pub fn register_task(&mut self, task: &Task) -> Result<()> {
        if self.store.get(task.spec.task_id).is_none() {
            let proto = compute_prototype(task.train.images.iter_rows())?;
            self.store.insert(task.spec.task_id, proto)?;
        }
        Ok(())
    }

    /// Contexts for `x`, either the stored prototype of `task` for every row or
    /// the nearest prototype per row. Also returns the store positions used.
    fn contexts_for(&self, x: &Matrix, task: Option<usize>) -> Result<Option<(Contexts, Vec<usize>)>> {
        if !self.uses_contexts() {
            return Ok(None);
        }
        if let Some(t) = task {
            let proto = self.store.get(t).ok_or(Error::InvalidArgument(format!("no prototype for task {t}")))?;
            let pos = self.store.iter().position(|(id, _)| id == t).unwrap_or(0);
            return Ok(Some((Contexts::shared(proto.to_vec(), x.rows()), vec![pos])));
        }
        let mut used: Vec<usize> = Vec::new();
        let mut of_sample = Vec::with_capacity(x.rows());
        for row in x.iter_rows() {
            let i = self.store.nearest_index(row)?;
            let slot = match used.iter().position(|&u| u == i) {
                Some(s) => s,
                None => {
                    used.push(i);
                    used.len() - 1
                }
            };
            of_sample.push(slot);
        }
        let vectors = used.iter().map(|&i| self.store.prototype_at(i).1.to_vec()).collect();
        Ok(Some((Contexts::new(vectors, of_sample)?, used)))
    }

    /// Contexts where each sample uses the prototype of its own task.
    fn contexts_by_task(&self, task_of: &[usize]) -> Result<Option<(Contexts, Vec<usize>)>> {
        if !self.uses_contexts() {
            return Ok(None);
        }
        let mut used: Vec<usize> = Vec::new();
        let mut of_sample = Vec::with_capacity(task_of.len());
        for &t in task_of {
            if !used.contains(&t) {
                used.push(t);
            }
            of_sample.push(used.iter().position(|&u| u == t).unwrap_or(0));
        }
        let mut vectors = Vec::with_capacity(used.len());
        let mut positions = Vec::with_capacity(used.len());
        for &t in &used {
            let p = self.store.get(t).ok_or(Error::InvalidArgument(format!("no prototype for task {t}")))?;
            vectors.push(p.to_vec());
            positions.push(self.store.iter().position(|(id, _)| id == t).unwrap_or(0));
        }
        Ok(Some((Contexts::new(vectors, of_sample)?, positions)))
    }

    /// Trains on one task of the stream (Algorithm 1 for a single task).
    pub fn train_task(&mut self, task: &Task) -> Result<()> {
        self.register_task(task)?;
        let set = TrainSet {
            data: &task.train,
            task_of: vec![task.spec.task_id; task.train.len()],
        };
        self.train_on(&set)
    }

    /// One pass of `epochs` over `set`, then the task-boundary updates.
    fn train_on(&mut self, set: &TrainSet<'_>) -> Result<()> {
        let task_index = self.tasks_done;
        let n = set.data.len();
        if n == 0 {
            return Err(Error::Empty("task training split"));
        }
        let bs = self.cfg.training.batch_size;
        let mut step = 0;
        for epoch in 0..self.cfg.training.epochs {
            let order = permutation(&mut self.rngs.shuffle, n);
            for chunk in order.chunks(bs) {
                let log = self
                    .train_step(set, chunk, task_index)
                    .map_err(|e| e.in_step(task_index, step))?;
                self.steps.push(StepLog {
                    task: task_index,
                    epoch,
                    step,
                    ..log
                });
                step += 1;
            }
        }
        for layer in &mut self.model.hidden {
            layer.dropout.refresh_keep_probs();
        }
        if let Some(si) = &mut self.si {
            si.consolidate_task(&self.model.params())?;
        }
        self.tasks_done += 1;
        Ok(())
    }

    fn train_step(&mut self, set: &TrainSet<'_>, idx: &[usize], task_index: usize) -> Result<StepLog> {
        let mech = self.cfg.mechanisms;
        let batch = set.data.subset(idx);
        let task_of: Vec<usize> = idx.iter().map(|&i| set.task_of[i]).collect();
        let current = self.contexts_by_task(&task_of)?;

        let pass = self.model.forward(
            &batch.images,
            current.as_ref().map(|c| &c.0),
            Mode::Train { dropout: mech.dropout },
            &mut self.rngs.dropout,
        )?;
        let (loss_task, g_logits) = batch_cross_entropy(&pass.logits, &batch.labels)?;
        let mut grads = self.model.backward(&pass, &g_logits)?;
        let mut log = StepLog {
            loss_task,
            ..StepLog::default()
        };

        let mut hebbian_ctx: Vec<usize> = current.as_ref().map(|c| c.1.clone()).unwrap_or_default();
        if mech.er {
            if let Some(replayed) = self.buffer.sample(self.cfg.training.batch_size, &mut self.rngs.reservoir) {
                let rows: Vec<&[Real]> = replayed.iter().map(|e| e.x.as_slice()).collect();
                let xm = Matrix::from_rows(&rows)?;
                let ym: Vec<usize> = replayed.iter().map(|e| e.y).collect();
                let zrows: Vec<&[Real]> = replayed.iter().map(|e| e.logits.as_slice()).collect();
                let zm = Matrix::from_rows(&zrows)?;
                let inferred = self.contexts_for(&xm, None)?;
                let rpass = self.model.forward(
                    &xm,
                    inferred.as_ref().map(|c| &c.0),
                    Mode::Train { dropout: false },
                    &mut self.rngs.dropout,
                )?;
                let (rl, rg) = replay_loss(&rpass.logits, &ym, &zm, self.cfg.replay.alpha, self.cfg.beta())?;
                grads.add(&self.model.backward(&rpass, &rg)?);
                log.loss_er = rl.classification;
                log.loss_cr = rl.consistency;
                if let Some((_, used)) = inferred {
                    for u in used {
                        if !hebbian_ctx.contains(&u) {
                            hebbian_ctx.push(u);
                        }
                    }
                }
            }
        }

        if let Some(si) = &self.si {
            log.loss_sc = si.penalty(&self.model.params(), Some(&mut grads))?;
        }

        let specs = self.model.param_specs();
        scale_inhibitory_grads(&specs, &mut grads);
        clip_gradients(&mut grads, self.cfg.optimizer.clip_mode, self.cfg.optimizer.clip_value);
        {
            let mut params = self.model.params_mut();
            sgd_step(&mut params, &grads, &self.cfg.optimizer, task_index)?;
        }

        if mech.hebbian && self.uses_contexts() {
            let ctx: Vec<Vec<Real>> = hebbian_ctx
                .iter()
                .map(|&p| self.store.prototype_at(p).1.to_vec())
                .collect();
            let refs: Vec<&[Real]> = ctx.iter().map(|c| c.as_slice()).collect();
            let eta_h = self.cfg.optimizer.eta_h;
            for bank in self.model.dendrite_banks_mut() {
                hebbian_step(bank, &refs, eta_h)?;
            }
        }

        if let Some(si) = &mut self.si {
            let lrs: Vec<Real> = specs
                .iter()
                .map(|s| self.cfg.optimizer.lr_for(s.kind, task_index))
                .collect();
            si.accumulate_omega(&grads, &lrs)?;
        }

        if mech.er {
            for s in 0..batch.len() {
                let entry = ReplayEntry {
                    x: batch.sample(s).to_vec(),
                    y: batch.labels[s],
                    logits: pass.logits.row(s).to_vec(),
                };
                self.buffer.insert(entry, &mut self.rngs.reservoir)?;
            }
        }

        for (layer, rec) in self.model.hidden.iter_mut().zip(&pass.records) {
            update_activation_counts(&mut layer.dropout, rec)?;
        }
        Ok(log)
    }

    /// Eval-mode forward over `x` in chunks; returns the logits.
    fn eval_logits(&self, x: &Matrix, oracle_task: Option<usize>) -> Result<(Matrix, Vec<Vec<Real>>)> {
        let mut logits = Vec::with_capacity(x.rows() * self.model.n_classes());
        let mut counts: Vec<Vec<Real>> = self.model.hidden.iter().map(|l| vec![0.0; l.n_out()]).collect();
        // Eval mode never draws from the stream; this is only a placeholder.
        let mut rng = self.rngs.dropout.clone();
        let mut start = 0;
        while start < x.rows() {
            let end = (start + EVAL_CHUNK).min(x.rows());
            let idx: Vec<usize> = (start..end).collect();
            let rows: Vec<&[Real]> = idx.iter().map(|&i| x.row(i)).collect();
            let chunk = Matrix::from_rows(&rows)?;
            let ctx = self.contexts_for(&chunk, oracle_task)?;
            let pass = self.model.forward(&chunk, ctx.as_ref().map(|c| &c.0), Mode::Eval, &mut rng)?;
            logits.extend_from_slice(pass.logits.as_slice());
            for (acc, rec) in counts.iter_mut().zip(&pass.records) {
                for (a, c) in acc.iter_mut().zip(fired_counts(&rec.output)) {
                    *a += c;
                }
            }
            start = end;
        }
        Ok((Matrix::new(x.rows(), self.model.n_classes(), logits)?, counts))
    }

    /// Accuracy on `test`, predicting only among `allowed` classes.
    pub fn evaluate(&self, test: &Dataset, task_id: usize, allowed: &[usize]) -> Result<Real> {
        Ok(self.evaluate_with_counts(test, task_id, allowed)?.0)
    }

    /// Accuracy plus per-layer activation counts over `test`.
    pub fn evaluate_with_counts(
        &self,
        test: &Dataset,
        task_id: usize,
        allowed: &[usize],
    ) -> Result<(Real, Vec<Vec<Real>>)> {
        if self.store.is_empty() && self.uses_contexts() {
            return Err(Error::Empty("context store"));
        }
        if test.is_empty() {
            return Err(Error::Empty("test split"));
        }
        let oracle = if self.cfg.training.oracle_task_identity && self.store.get(task_id).is_some() {
            Some(task_id)
        } else {
            None
        };
        let (logits, counts) = self.eval_logits(&test.images, oracle)?;
        let correct = (0..test.len())
            .filter(|&s| predict(logits.row(s), allowed) == Some(test.labels[s]))
            .count();
        Ok((correct as Real / test.len() as Real, counts))
    }
}

/// Highest-scoring class among `allowed` (lowest label on ties).
pub fn predict(logits: &[Real], allowed: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, Real)> = None;
    for &c in allowed {
        let v = *logits.get(c)?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((c, v));
        }
    }
    best.map(|(c, _)| c)
}

/// Outcome of training over a whole stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub seed: u64,
    /// `accuracy[i][j]`: accuracy on task `j` after training task `i`.
    pub accuracy: AccuracyMatrix,
    pub average_accuracy: Real,
    pub forgetting: Real,
    pub forward_transfer: Option<Real>,
    /// Fraction of test samples whose nearest prototype is their own task's.
    pub context_accuracy: Real,
    /// Last hidden layer's activation counts on each task's test split after training.
    pub activation_counts: Vec<Vec<Real>>,
    /// Symmetric KL between those counts for every task pair.
    pub activation_overlap: Vec<Vec<Real>>,
    /// Mean loss terms per trained task.
    pub task_losses: Vec<StepLog>,
    pub wall_clock_secs: f64,
}

/// A finished run: the summary plus the per-step loss log.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub steps: Vec<StepLog>,
}

/// Caps each task's splits per `training.max_*_per_task`.
pub fn limit_stream(stream: &TaskStream, cfg: &TrainingConfig) -> TaskStream {
    let mut out = stream.clone();
    for t in &mut out.tasks {
        if cfg.max_train_per_task > 0 {
            t.train = t.train.truncate(cfg.max_train_per_task);
        }
        if cfg.max_test_per_task > 0 {
            t.test = t.test.truncate(cfg.max_test_per_task);
        }
    }
    out
}

/// Trains over `stream` with `cfg` and seed `seed`, writing a checkpoint
/// after every task when `checkpoint_dir` is given.
pub fn run_stream(
    stream: &TaskStream,
    cfg: &RunConfig,
    seed: u64,
    run_id: &str,
    checkpoint_dir: Option<&Path>,
) -> Result<RunOutput> {
    let started = Instant::now();
    if stream.is_empty() {
        return Err(Error::Empty("task stream"));
    }
    let stream = limit_stream(stream, &cfg.training);
    let n_tasks = stream.len();
    let mut trainer = Trainer::new(cfg.clone(), stream.input_dim(), stream.n_classes, n_tasks, seed)?;
    let mut acc: AccuracyMatrix = vec![vec![None; n_tasks]; n_tasks];

    if cfg.training.joint {
        for t in &stream.tasks {
            trainer.register_task(t)?;
        }
        let pooled = Dataset::concat(stream.tasks.iter().map(|t| &t.train))?;
        let task_of = stream
            .tasks
            .iter()
            .flat_map(|t| std::iter::repeat_n(t.spec.task_id, t.train.len()))
            .collect();
        trainer.train_on(&TrainSet {
            data: &pooled,
            task_of,
        })?;
        let allowed = stream.classes_through(n_tasks - 1);
        for (j, t) in stream.tasks.iter().enumerate() {
            acc[n_tasks - 1][j] = Some(trainer.evaluate(&t.test, t.spec.task_id, &allowed)?);
        }
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(&dir.join("checkpoint_joint.bin"), &trainer.checkpoint(&acc))?;
        }
    } else {
        for (i, task) in stream.tasks.iter().enumerate() {
            trainer.train_task(task)?;
            let allowed = stream.classes_through(i);
            let upto = if cfg.training.forward_transfer {
                (i + 1).min(n_tasks - 1)
            } else {
                i
            };
            for j in 0..=upto {
                let t = &stream.tasks[j];
                acc[i][j] = Some(trainer.evaluate(&t.test, t.spec.task_id, &allowed)?);
            }
            log::info!(
                "{run_id} seed {seed}: task {} done, mean accuracy so far {:.4}",
                i + 1,
                acc[i][..=i].iter().flatten().sum::<Real>() / (i + 1) as Real
            );
            if let Some(dir) = checkpoint_dir {
                save_checkpoint(&dir.join(format!("checkpoint_task{}.bin", i + 1)), &trainer.checkpoint(&acc))?;
            }
        }
    }

    let allowed = stream.classes_through(n_tasks - 1);
    let last = trainer.model.hidden.len() - 1;
    let mut activation_counts = Vec::with_capacity(n_tasks);
    for t in &stream.tasks {
        let (_, counts) = trainer.evaluate_with_counts(&t.test, t.spec.task_id, &allowed)?;
        activation_counts.push(counts[last].clone());
    }
    let activation_overlap = activation_counts
        .iter()
        .map(|p| activation_counts.iter().map(|q| metrics::activation_overlap(p, q)).collect())
        .collect();

    let result = RunResult {
        run_id: run_id.to_string(),
        seed,
        average_accuracy: average_accuracy(&acc),
        forgetting: forgetting(&acc),
        forward_transfer: forward_transfer(&acc, 1.0 / stream.n_classes as Real),
        context_accuracy: context_accuracy(&trainer.store, &stream)?,
        activation_counts,
        activation_overlap,
        task_losses: mean_losses(&trainer.steps, n_tasks),
        accuracy: acc,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        result,
        steps: trainer.steps,
    })
}

/// Fraction of test samples whose nearest stored prototype belongs to their
/// own task.
pub fn context_accuracy(store: &ContextStore, stream: &TaskStream) -> Result<Real> {
    if store.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for t in &stream.tasks {
        for x in t.test.images.iter_rows() {
            let i = store.nearest_index(x)?;
            hits += usize::from(store.prototype_at(i).0 == t.spec.task_id);
            total += 1;
        }
    }
    Ok(hits as Real / total.max(1) as Real)
}

fn mean_losses(steps: &[StepLog], n_tasks: usize) -> Vec<StepLog> {
    (0..n_tasks)
        .filter_map(|t| {
            let s: Vec<&StepLog> = steps.iter().filter(|s| s.task == t).collect();
            if s.is_empty() {
                return None;
            }
            let n = s.len() as Real;
            Some(StepLog {
                task: t,
                epoch: 0,
                step: s.len(),
                loss_task: s.iter().map(|l| l.loss_task).sum::<Real>() / n,
                loss_er: s.iter().map(|l| l.loss_er).sum::<Real>() / n,
                loss_cr: s.iter().map(|l| l.loss_cr).sum::<Real>() / n,
                loss_sc: s.iter().map(|l| l.loss_sc).sum::<Real>() / n,
            })
        })
        .collect()
}
