//! Metric files: per-seed accuracy CSV, per-step loss CSV and a JSON summary.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::trainer::{mean_std, RunOutput, RunResult};

#[derive(Debug, Serialize)]
struct AccuracyRow<'a> {
    run_id: &'a str,
    seed: u64,
    after_task: usize,
    eval_task: usize,
    accuracy: Real,
    loss_task: Real,
    loss_er: Real,
    loss_cr: Real,
    loss_sc: Real,
}

#[derive(Debug, Serialize)]
struct StepRow<'a> {
    run_id: &'a str,
    seed: u64,
    task: usize,
    epoch: usize,
    step: usize,
    loss_task: Real,
    loss_er: Real,
    loss_cr: Real,
    loss_sc: Real,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("{}: {other:?}", path.display())),
    }
}

pub fn metrics_path(out_dir: &Path, run_id: &str, seed: u64) -> PathBuf {
    out_dir.join(format!("{run_id}_seed{seed}.csv"))
}

pub fn steps_path(out_dir: &Path, run_id: &str, seed: u64) -> PathBuf {
    out_dir.join(format!("{run_id}_seed{seed}_steps.csv"))
}

pub fn summary_path(out_dir: &Path, run_id: &str) -> PathBuf {
    out_dir.join(format!("{run_id}_summary.json"))
}

/// One row per measured `(after_task, eval_task)` cell, with the mean loss
/// terms of `after_task`.
pub fn write_metrics_csv(path: &Path, r: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for (i, row) in r.accuracy.iter().enumerate() {
        let losses = r.task_losses.iter().find(|l| l.task == i).copied().unwrap_or_default();
        for (j, a) in row.iter().enumerate() {
            let Some(acc) = a else { continue };
            w.serialize(AccuracyRow {
                run_id: &r.run_id,
                seed: r.seed,
                after_task: i + 1,
                eval_task: j + 1,
                accuracy: *acc,
                loss_task: losses.loss_task,
                loss_er: losses.loss_er,
                loss_cr: losses.loss_cr,
                loss_sc: losses.loss_sc,
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_steps_csv(path: &Path, out: &RunOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for s in &out.steps {
        w.serialize(StepRow {
            run_id: &out.result.run_id,
            seed: out.result.seed,
            task: s.task + 1,
            epoch: s.epoch + 1,
            step: s.step,
            loss_task: s.loss_task,
            loss_er: s.loss_er,
            loss_cr: s.loss_cr,
            loss_sc: s.loss_sc,
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanStd {
    pub mean: Real,
    pub std: Real,
}

impl MeanStd {
    fn of(values: &[Real]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub run_id: String,
    /// Seconds since the Unix epoch when the summary was written.
    pub timestamp: u64,
    pub average_accuracy: MeanStd,
    pub forgetting: MeanStd,
    pub forward_transfer: Option<MeanStd>,
    pub context_accuracy: MeanStd,
    pub runs: Vec<&'a RunResult>,
    pub config: &'a ExperimentConfig,
}

pub fn summarize<'a>(cfg: &'a ExperimentConfig, runs: &'a [RunOutput]) -> Summary<'a> {
    let pick = |f: fn(&RunResult) -> Real| -> MeanStd {
        MeanStd::of(&runs.iter().map(|r| f(&r.result)).collect::<Vec<_>>())
    };
    let ft: Vec<Real> = runs.iter().filter_map(|r| r.result.forward_transfer).collect();
    Summary {
        run_id: cfg.run_id(),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        average_accuracy: pick(|r| r.average_accuracy),
        forgetting: pick(|r| r.forgetting),
        forward_transfer: (!ft.is_empty()).then(|| MeanStd::of(&ft)),
        context_accuracy: pick(|r| r.context_accuracy),
        runs: runs.iter().map(|r| &r.result).collect(),
        config: cfg,
    }
}

pub fn write_summary(path: &Path, summary: &Summary<'_>) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
