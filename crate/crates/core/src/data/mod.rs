//! Datasets and continual-learning task streams.

mod idx;
mod transform;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rng::{permutation, stream, Purpose};
use crate::numerics::{Matrix, Real};

pub use idx::{load_idx, load_split, parse_idx, parse_images, parse_labels, resolve_dir, Split};
pub use transform::{invert_permutation, permute_pixels, rotate_image, Interpolation};

/// Side length of MNIST-style images.
pub const IMAGE_SIDE: usize = 28;
pub const N_CLASSES: usize = 10;
const CLASSES_PER_SEQ_TASK: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One flattened image per row, pixels in `[0, 1]`.
    pub images: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Matrix, labels: Vec<usize>) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} images, {} labels", images.rows(), labels.len()),
            ));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    pub fn sample(&self, i: usize) -> &[Real] {
        self.images.row(i)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let dim = self.dim();
        let mut data = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            data.extend_from_slice(self.images.row(i));
        }
        Dataset {
            images: Matrix::new(indices.len(), dim, data).expect("rows copied whole"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keeps the first `n` samples.
    pub fn truncate(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    fn map_images(&self, f: impl Fn(&[Real]) -> Vec<Real> + Sync) -> Dataset {
        let rows: Vec<Vec<Real>> = (0..self.len()).into_par_iter().map(|i| f(self.sample(i))).collect();
        Dataset {
            images: Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, self.dim())),
            labels: self.labels.clone(),
        }
    }

    /// Concatenation of several datasets with equal input size.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut dim = None;
        for p in parts {
            if *dim.get_or_insert(p.dim()) != p.dim() {
                return Err(Error::shape("Dataset::concat", "input sizes differ"));
            }
            data.extend_from_slice(p.images.as_slice());
            labels.extend_from_slice(&p.labels);
        }
        let dim = dim.ok_or(Error::Empty("dataset list"))?;
        Dataset::new(Matrix::new(labels.len(), dim, data)?, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Rot,
    Perm,
    Seq,
}

impl Scenario {
    /// Class-incremental scenarios restrict predictions to classes seen so far.
    pub fn is_class_incremental(self) -> bool {
        matches!(self, Scenario::Seq)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Rot => "rot",
            Scenario::Perm => "perm",
            Scenario::Seq => "seq",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rot" | "rotation" => Ok(Scenario::Rot),
            "perm" | "permutation" => Ok(Scenario::Perm),
            "seq" | "split" => Ok(Scenario::Seq),
            other => Err(Error::Config(format!("unknown scenario `{other}` (rot, perm, seq)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskKind {
    Rotate { degrees: Real },
    Permute { perm: Vec<usize> },
    ClassSubset { labels: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub kind: TaskKind,
}

impl TaskSpec {
    /// Applies the task transform to a base dataset.
    pub fn apply(&self, base: &Dataset, interp: Interpolation) -> Dataset {
        match &self.kind {
            TaskKind::Rotate { degrees } => {
                if *degrees == 0.0 {
                    base.clone()
                } else {
                    base.map_images(|img| rotate_image(img, IMAGE_SIDE, *degrees, interp))
                }
            }
            TaskKind::Permute { perm } => base.map_images(|img| permute_pixels(img, perm)),
            TaskKind::ClassSubset { labels } => {
                let idx: Vec<usize> = (0..base.len()).filter(|&i| labels.contains(&base.labels[i])).collect();
                base.subset(&idx)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub spec: TaskSpec,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub scenario: Scenario,
    pub tasks: Vec<Task>,
    pub n_classes: usize,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.train.dim())
    }

    /// Labels that may be predicted after training tasks `0..=task`.
    pub fn classes_through(&self, task: usize) -> Vec<usize> {
        if !self.scenario.is_class_incremental() {
            return (0..self.n_classes).collect();
        }
        let mut out: Vec<usize> = self.tasks[..=task.min(self.tasks.len() - 1)]
            .iter()
            .flat_map(|t| match &t.spec.kind {
                TaskKind::ClassSubset { labels } => labels.clone(),
                _ => Vec::new(),
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Task specifications only, without materialising the data.
pub fn task_specs(scenario: Scenario, n_tasks: usize, theta_inc: Real, seed: u64, dim: usize) -> Result<Vec<TaskSpec>> {
    if n_tasks == 0 {
        return Err(Error::InvalidArgument("n_tasks must be >= 1".into()));
    }
    match scenario {
        Scenario::Rot => {
            let max = (n_tasks - 1) as Real * theta_inc;
            if !(theta_inc >= 0.0) || max > 180.0 {
                return Err(Error::InvalidArgument(format!(
                    "rotation angles must lie in [0, 180]; {n_tasks} tasks at {theta_inc} degrees reach {max}"
                )));
            }
            Ok((0..n_tasks)
                .map(|t| TaskSpec {
                    task_id: t,
                    kind: TaskKind::Rotate {
                        degrees: t as Real * theta_inc,
                    },
                })
                .collect())
        }
        Scenario::Perm => {
            let mut rng = stream(seed, Purpose::Data);
            Ok((0..n_tasks)
                .map(|t| TaskSpec {
                    task_id: t,
                    kind: TaskKind::Permute {
                        perm: permutation(&mut rng, dim),
                    },
                })
                .collect())
        }
        Scenario::Seq => {
            if n_tasks * CLASSES_PER_SEQ_TASK > N_CLASSES {
                return Err(Error::InvalidArgument(format!(
                    "seq supports at most {} tasks, got {n_tasks}",
                    N_CLASSES / CLASSES_PER_SEQ_TASK
                )));
            }
            Ok((0..n_tasks)
                .map(|t| TaskSpec {
                    task_id: t,
                    kind: TaskKind::ClassSubset {
                        labels: (t * CLASSES_PER_SEQ_TASK..(t + 1) * CLASSES_PER_SEQ_TASK).collect(),
                    },
                })
                .collect())
        }
    }
}

/// Builds the task stream for `scenario` from the base train/test splits.
pub fn make_stream(
    train: &Dataset,
    test: &Dataset,
    scenario: Scenario,
    n_tasks: usize,
    theta_inc: Real,
    seed: u64,
    interp: Interpolation,
) -> Result<TaskStream> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("base dataset"));
    }
    if train.dim() != test.dim() {
        return Err(Error::shape("make_stream", "train and test input sizes differ"));
    }
    if scenario == Scenario::Rot && train.dim() != IMAGE_SIDE * IMAGE_SIDE {
        return Err(Error::InvalidArgument(format!(
            "rotation needs {0}x{0} images, got {1} pixels",
            IMAGE_SIDE,
            train.dim()
        )));
    }
    let specs = task_specs(scenario, n_tasks, theta_inc, seed, train.dim())?;
    let tasks = specs
        .into_iter()
        .map(|spec| {
            let train = spec.apply(train, interp);
            let test = spec.apply(test, interp);
            if train.is_empty() || test.is_empty() {
                return Err(Error::InvalidArgument(format!("task {} has no samples", spec.task_id)));
            }
            Ok(Task { spec, train, test })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskStream {
        scenario,
        tasks,
        n_classes: N_CLASSES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let mut data = Vec::new();
        for i in 0..n {
            data.extend((0..784).map(|p| ((i * 31 + p * 7) % 255) as Real / 255.0));
        }
        Dataset::new(Matrix::new(n, 784, data).unwrap(), (0..n).map(|i| i % 10).collect()).unwrap()
    }

    #[test]
    fn rotation_angles() {
        let specs = task_specs(Scenario::Rot, 5, 8.0, 0, 784).unwrap();
        let angles: Vec<Real> = specs
            .iter()
            .map(|s| match s.kind {
                TaskKind::Rotate { degrees } => degrees,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(angles, vec![0.0, 8.0, 16.0, 24.0, 32.0]);
    }

    #[test]
    fn rotation_beyond_half_turn_rejected() {
        assert!(task_specs(Scenario::Rot, 10, 32.0, 0, 784).is_err());
    }

    #[test]
    fn permutations_are_seeded_bijections() {
        let a = task_specs(Scenario::Perm, 3, 0.0, 7, 784).unwrap();
        let b = task_specs(Scenario::Perm, 3, 0.0, 7, 784).unwrap();
        assert_eq!(a, b);
        let c = task_specs(Scenario::Perm, 3, 0.0, 8, 784).unwrap();
        assert_ne!(a, c);
        for s in &a {
            let TaskKind::Permute { perm } = &s.kind else { unreachable!() };
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..784).collect::<Vec<_>>());
        }
        // The first task is permuted too.
        let TaskKind::Permute { perm } = &a[0].kind else { unreachable!() };
        assert_ne!(perm, &(0..784).collect::<Vec<_>>());
    }

    #[test]
    fn seq_pairs_are_disjoint_and_cover_all_classes() {
        let specs = task_specs(Scenario::Seq, 5, 0.0, 0, 784).unwrap();
        let mut all = Vec::new();
        for (t, s) in specs.iter().enumerate() {
            let TaskKind::ClassSubset { labels } = &s.kind else { unreachable!() };
            assert_eq!(labels, &vec![2 * t, 2 * t + 1]);
            all.extend(labels.iter().copied());
        }
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(task_specs(Scenario::Seq, 6, 0.0, 0, 784).is_err());
    }

    #[test]
    fn seq_stream_filters_labels() {
        let d = toy(40);
        let s = make_stream(&d, &d, Scenario::Seq, 5, 0.0, 0, Interpolation::Bilinear).unwrap();
        assert!(s.tasks[2].train.labels.iter().all(|&l| l == 4 || l == 5));
        assert_eq!(s.classes_through(1), vec![0, 1, 2, 3]);
    }

    #[test]
    fn streams_are_deterministic() {
        let d = toy(12);
        let a = make_stream(&d, &d, Scenario::Perm, 2, 0.0, 3, Interpolation::Bilinear).unwrap();
        let b = make_stream(&d, &d, Scenario::Perm, 2, 0.0, 3, Interpolation::Bilinear).unwrap();
        for (x, y) in a.tasks.iter().zip(&b.tasks) {
            assert_eq!(x.train, y.train);
            assert_eq!(x.spec, y.spec);
        }
        let TaskKind::Permute { perm } = &a.tasks[1].spec.kind else { unreachable!() };
        let restored = permute_pixels(a.tasks[1].train.sample(0), &invert_permutation(perm));
        assert_eq!(restored, d.sample(0));
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("Perm".parse::<Scenario>().unwrap(), Scenario::Perm);
        assert!("cifar".parse::<Scenario>().is_err());
    }
}
