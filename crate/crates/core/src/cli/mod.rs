//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 configuration error (including bad flags),
//! 2 missing or malformed data, 3 failure while training.

pub mod config;
pub mod output;
pub mod presets;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::data::{load_split, make_stream, resolve_dir, Scenario, Split, TaskStream};
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::trainer::{run_stream, RunOutput};

pub use config::ExperimentConfig;
pub use presets::{find_preset, presets, Preset};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bioann", version, about = "Continual-learning experiments with a biologically plausible network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train over a task stream for every seed and write the metrics.
    Run(RunArgs),
    /// List the built-in presets, or print one as TOML.
    Presets {
        /// Preset to print in full.
        name: Option<String>,
    },
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML experiment file, applied on top of the preset (if any).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in configuration to start from (see `bioann presets`).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub n_tasks: Option<usize>,
    /// Rotation increment in degrees (rot scenario).
    #[arg(long)]
    pub theta_inc: Option<Real>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Directory with the IDX files (or a `<dataset>/` subdirectory of them).
    #[arg(long, env = "DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Run this many seeds concurrently.
    #[arg(long)]
    pub parallel_seeds: Option<usize>,
    /// Units per hidden layer, applied to every layer.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Write a checkpoint after every task.
    #[arg(long)]
    pub checkpoints: bool,
    #[arg(long)]
    pub no_dale: bool,
    /// Also disables the Hebbian update.
    #[arg(long)]
    pub no_dendrites: bool,
    #[arg(long)]
    pub no_hebbian: bool,
    #[arg(long)]
    pub no_dropout: bool,
    #[arg(long)]
    pub no_si: bool,
    /// Also disables consistency regularisation.
    #[arg(long)]
    pub no_er: bool,
    #[arg(long)]
    pub no_cr: bool,
}

/// Resolves preset, file and flags into the effective configuration.
pub fn effective_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.preset {
        Some(name) => {
            find_preset(name)
                .ok_or_else(|| Error::Config(format!("unknown preset `{name}`; see `bioann presets`")))?
                .config
        }
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &args.config {
        cfg = ExperimentConfig::load(path, &cfg)?;
    }
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(n) = args.n_tasks {
        cfg.n_tasks = n;
    }
    if let Some(t) = args.theta_inc {
        cfg.theta_inc = t;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(d) = &args.data_dir {
        cfg.data_dir = Some(d.clone());
    }
    if let Some(d) = &args.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(r) = &args.run_id {
        cfg.run_id = Some(r.clone());
    }
    if let Some(h) = args.hidden {
        cfg.model.hidden.iter_mut().for_each(|v| *v = h);
        cfg.model.inhibitory = None;
    }
    if let Some(e) = args.epochs {
        cfg.training.epochs = e;
    }
    cfg.checkpoints |= args.checkpoints;
    let m = &mut cfg.mechanisms;
    if args.no_dale {
        m.dale = false;
    }
    if args.no_dendrites {
        m.dendrites = false;
        m.hebbian = false;
    }
    if args.no_hebbian {
        m.hebbian = false;
    }
    if args.no_dropout {
        m.dropout = false;
    }
    if args.no_si {
        m.si = false;
    }
    if args.no_er {
        m.er = false;
        m.cr = false;
    }
    if args.no_cr {
        m.cr = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads the base dataset and builds the task stream of `cfg`.
pub fn build_stream(cfg: &ExperimentConfig, seed: u64) -> Result<TaskStream> {
    let root = cfg.data_dir.clone().unwrap_or_else(|| PathBuf::from("data"));
    if !root.is_dir() {
        return Err(Error::io(
            &root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "data directory not found"),
        ));
    }
    let train = load_split(&root, &cfg.dataset, Split::Train)?;
    let test = load_split(&root, &cfg.dataset, Split::Test)?;
    log::info!(
        "loaded {} train / {} test samples from {}",
        train.len(),
        test.len(),
        resolve_dir(&root, &cfg.dataset).display()
    );
    make_stream(
        &train,
        &test,
        cfg.scenario,
        cfg.n_tasks,
        cfg.theta_inc,
        seed,
        cfg.training.interpolation,
    )
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> std::result::Result<RunOutput, (i32, Error)> {
    let stream = build_stream(cfg, seed).map_err(|e| (EXIT_DATA, e))?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| (EXIT_RUNTIME, Error::io(&cfg.out_dir, e)))?;
    let run_id = cfg.run_id();
    let ck_dir = cfg.checkpoints.then(|| cfg.out_dir.join(format!("{run_id}_seed{seed}_checkpoints")));
    if let Some(d) = &ck_dir {
        std::fs::create_dir_all(d).map_err(|e| (EXIT_RUNTIME, Error::io(d, e)))?;
    }
    let out = run_stream(&stream, &cfg.run_config(), seed, &run_id, ck_dir.as_deref()).map_err(|e| (EXIT_RUNTIME, e))?;
    let write = |out_dir: &Path| -> Result<()> {
        output::write_metrics_csv(&output::metrics_path(out_dir, &run_id, seed), &out.result)?;
        output::write_steps_csv(&output::steps_path(out_dir, &run_id, seed), &out)
    };
    write(&cfg.out_dir).map_err(|e| (EXIT_RUNTIME, e))?;
    Ok(out)
}

/// Runs every seed of `cfg`; returns the exit code.
pub fn execute(cfg: &ExperimentConfig, parallel: usize) -> i32 {
    let results: Vec<std::result::Result<RunOutput, (i32, Error)>> = if parallel > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(parallel).build() {
            Ok(pool) => pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect()),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_RUNTIME;
            }
        }
    } else {
        cfg.seeds.iter().map(|&s| run_seed(cfg, s)).collect()
    };
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(o) => runs.push(o),
            Err((code, e)) => {
                eprintln!("error: {e}");
                return code;
            }
        }
    }
    let summary = output::summarize(cfg, &runs);
    if let Err(e) = output::write_summary(&output::summary_path(&cfg.out_dir, &cfg.run_id()), &summary) {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    println!(
        "{}: average accuracy {:.2} ± {:.2}, forgetting {:.2} ± {:.2} over {} seed(s)",
        cfg.run_id(),
        100.0 * summary.average_accuracy.mean,
        100.0 * summary.average_accuracy.std,
        100.0 * summary.forgetting.mean,
        100.0 * summary.forgetting.std,
        runs.len()
    );
    0
}

/// Entry point shared by the binary and tests.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Presets { name: None } => {
            let mut out = std::io::stdout().lock();
            for p in presets() {
                // A closed pipe (e.g. `| head`) is not an error.
                if writeln!(out, "{:<36} {}", p.name, p.description).is_err() {
                    break;
                }
            }
            0
        }
        Command::Presets { name: Some(n) } => match find_preset(&n).map(|p| p.config.to_toml()) {
            Some(Ok(text)) => {
                print!("{text}");
                0
            }
            Some(Err(e)) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
            None => {
                eprintln!("error: unknown preset `{n}`");
                EXIT_CONFIG
            }
        },
        Command::Run(args) => match effective_config(&args) {
            Ok(cfg) => execute(&cfg, args.parallel_seeds.unwrap_or(1)),
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
    }
}
