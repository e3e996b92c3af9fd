use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Real;

/// Heterogeneous dropout: units that fired most on earlier tasks are the
/// most likely to be dropped on later ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutState {
    /// Cumulative activation counts over all training batches so far.
    pub counts: Vec<Real>,
    /// Retention probability per unit, refreshed at task boundaries.
    pub keep_probs: Vec<Real>,
    pub rho: Real,
}

impl DropoutState {
    pub fn new(units: usize, rho: Real) -> Self {
        Self {
            counts: vec![0.0; units],
            keep_probs: vec![1.0; units],
            rho,
        }
    }

    pub fn units(&self) -> usize {
        self.counts.len()
    }

    /// `p_j = exp(−a_j / max_k a_k · ρ)`; all ones while no unit has fired.
    pub fn refresh_keep_probs(&mut self) {
        let max = self.counts.iter().copied().fold(0.0, Real::max);
        if max <= 0.0 {
            self.keep_probs.iter_mut().for_each(|p| *p = 1.0);
            return;
        }
        for (p, &a) in self.keep_probs.iter_mut().zip(&self.counts) {
            *p = (-a / max * self.rho).exp();
        }
    }

    /// One Bernoulli draw per unit, shared by the whole batch.
    /// A draw is consumed for every unit so the stream position does not
    /// depend on the probabilities.
    pub fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        self.keep_probs
            .iter()
            .map(|&p| (rng.random::<f64>() as Real) < p)
            .collect()
    }

    /// Adds per-unit firing counts from a training batch.
    pub fn add_counts(&mut self, fired: &[Real]) -> Result<()> {
        if fired.len() != self.counts.len() {
            return Err(Error::shape(
                "update_activation_counts",
                format!("{} counts for {} units", fired.len(), self.counts.len()),
            ));
        }
        for (c, f) in self.counts.iter_mut().zip(fired) {
            *c += f;
        }
        Ok(())
    }
}

/// Free-function form of [`DropoutState::refresh_keep_probs`].
pub fn refresh_keep_probs(drop: &mut DropoutState) -> &[Real] {
    drop.refresh_keep_probs();
    &drop.keep_probs
}
