//! Reservoir-sampled episodic memory and the replay/consistency loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax_cross_entropy, Matrix, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub x: Vec<Real>,
    pub y: usize,
    /// Logits produced when the sample was inserted; never updated.
    pub logits: Vec<Real>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<ReplayEntry>,
    seen: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            seen: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Items offered so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn entries(&self) -> &[ReplayEntry] {
        &self.entries
    }

    /// Reservoir step: append while filling, afterwards overwrite slot `n`
    /// for `n ~ U[0, seen]` when `n < capacity`, so every offered item is
    /// retained with probability `capacity / offered`.
    pub fn insert<R: Rng + ?Sized>(&mut self, item: ReplayEntry, rng: &mut R) -> Result<()> {
        if let Some(first) = self.entries.first() {
            if first.logits.len() != item.logits.len() || first.x.len() != item.x.len() {
                return Err(Error::shape(
                    "reservoir_insert",
                    "entry does not match the stored input/logit sizes",
                ));
            }
        }
        if (self.seen as usize) < self.capacity {
            self.entries.push(item);
        } else {
            let n = rng.random_range(0..=self.seen);
            if (n as usize) < self.capacity {
                self.entries[n as usize] = item;
            }
        }
        self.seen += 1;
        Ok(())
    }

    /// `batch_size` entries drawn uniformly with replacement; `None` when
    /// the buffer is empty.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Vec<&ReplayEntry>> {
        if self.entries.is_empty() {
            return None;
        }
        Some(
            (0..batch_size)
                .map(|_| &self.entries[rng.random_range(0..self.entries.len())])
                .collect(),
        )
    }
}

pub fn reservoir_insert<R: Rng + ?Sized>(buf: &mut ReplayBuffer, item: ReplayEntry, rng: &mut R) -> Result<()> {
    buf.insert(item, rng)
}

pub fn sample_batch<'a, R: Rng + ?Sized>(
    buf: &'a ReplayBuffer,
    batch_size: usize,
    rng: &mut R,
) -> Option<Vec<&'a ReplayEntry>> {
    buf.sample(batch_size, rng)
}

/// Replay loss split into its two terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReplayLoss {
    /// `α · mean cross-entropy`.
    pub classification: Real,
    /// `β · mean squared logit difference`.
    pub consistency: Real,
}

impl ReplayLoss {
    pub fn total(&self) -> Real {
        self.classification + self.consistency
    }
}

/// `α·CE(f(x_m), y_m) + β·mean((f(x_m) − z_m)²)`, the mean taken over batch
/// and logit dimensions. Returns the gradient w.r.t. `logits`.
pub fn replay_loss(
    logits: &Matrix,
    labels: &[usize],
    stored: &Matrix,
    alpha: Real,
    beta: Real,
) -> Result<(ReplayLoss, Matrix)> {
    if labels.len() != logits.rows() || stored.shape() != logits.shape() {
        return Err(Error::shape(
            "replay_loss",
            format!(
                "logits {:?}, stored {:?}, {} labels",
                logits.shape(),
                stored.shape(),
                labels.len()
            ),
        ));
    }
    let (b, c) = logits.shape();
    let mut grad = Matrix::zeros(b, c);
    if b == 0 {
        return Ok((ReplayLoss::default(), grad));
    }
    let mut ce = 0.0;
    let mut mse = 0.0;
    let inv_b = 1.0 / b as Real;
    let inv_bc = 1.0 / (b * c) as Real;
    for (s, &y) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(s), y)?;
        ce += l;
        let f = logits.row(s);
        let z = stored.row(s);
        let out = grad.row_mut(s);
        for j in 0..c {
            let d = f[j] - z[j];
            mse += d * d;
            out[j] = alpha * g[j] * inv_b + beta * 2.0 * d * inv_bc;
        }
    }
    Ok((
        ReplayLoss {
            classification: alpha * ce * inv_b,
            consistency: beta * mse * inv_bc,
        },
        grad,
    ))
}
