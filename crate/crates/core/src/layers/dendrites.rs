use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, rng, Real};

/// Dendritic segments of every unit in a layer.
///
/// Weights are stored unit-major: segment `s` of unit `j` occupies
/// `weights[(j·segments + s)·dim ..][..dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendriteBank {
    units: usize,
    segments: usize,
    dim: usize,
    weights: Vec<Real>,
}

/// Winning segment and its signed response, per unit, for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub segments: Vec<usize>,
    pub responses: Vec<Real>,
}

impl DendriteBank {
    pub fn new(units: usize, segments: usize, dim: usize, weights: Vec<Real>) -> Result<Self> {
        if weights.len() != units * segments * dim {
            return Err(Error::shape(
                "DendriteBank::new",
                format!("{} weights for {units}x{segments}x{dim}", weights.len()),
            ));
        }
        Ok(Self {
            units,
            segments,
            dim,
            weights,
        })
    }

    /// Segment weights ~ N(0, 1/dim).
    pub fn init<R: Rng + ?Sized>(units: usize, segments: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let std = 1.0 / (dim.max(1) as Real).sqrt();
        let weights = (0..units * segments * dim)
            .map(|_| rng::normal(rng, 0.0, std))
            .collect();
        Self::new(units, segments, dim, weights)
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[Real] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Real] {
        &mut self.weights
    }

    #[inline]
    fn offset(&self, unit: usize, segment: usize) -> usize {
        (unit * self.segments + segment) * self.dim
    }

    pub fn segment(&self, unit: usize, segment: usize) -> &[Real] {
        let o = self.offset(unit, segment);
        &self.weights[o..o + self.dim]
    }

    pub fn segment_mut(&mut self, unit: usize, segment: usize) -> &mut [Real] {
        let o = self.offset(unit, segment);
        &mut self.weights[o..o + self.dim]
    }

    /// For each unit pick `κ = argmax_s |u_s·c|` (lowest index on ties)
    /// and return the response with its sign.
    pub fn select(&self, context: &[Real]) -> Result<Selection> {
        if self.segments == 0 {
            return Err(Error::Empty("dendrite segment bank"));
        }
        if context.len() != self.dim {
            return Err(Error::shape(
                "dendrite_select",
                format!("context of {} for segment dimension {}", context.len(), self.dim),
            ));
        }
        let mut segments = Vec::with_capacity(self.units);
        let mut responses = Vec::with_capacity(self.units);
        for unit in 0..self.units {
            let mut best = (0, dot(self.segment(unit, 0), context));
            for s in 1..self.segments {
                let r = dot(self.segment(unit, s), context);
                if r.abs() > best.1.abs() {
                    best = (s, r);
                }
            }
            segments.push(best.0);
            responses.push(best.1);
        }
        Ok(Selection { segments, responses })
    }
}

/// Free-function form of [`DendriteBank::select`].
pub fn dendrite_select(bank: &DendriteBank, context: &[Real]) -> Result<Selection> {
    bank.select(context)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{stream, Purpose};
    use proptest::prelude::*;

    #[test]
    fn strongest_magnitude_wins_with_sign() {
        // u_1·c = 0.3, u_2·c = −0.9
        let bank = DendriteBank::new(1, 2, 2, vec![0.3, 0.0, -0.9, 0.0]).unwrap();
        let sel = bank.select(&[1.0, 0.0]).unwrap();
        assert_eq!(sel.segments, vec![1]);
        assert_eq!(sel.responses, vec![-0.9]);
    }

    #[test]
    fn all_zero_responses_pick_first_segment() {
        let bank = DendriteBank::new(2, 3, 2, vec![1.0; 12]).unwrap();
        let sel = bank.select(&[0.0, 0.0]).unwrap();
        assert_eq!(sel.segments, vec![0, 0]);
        assert_eq!(sel.responses, vec![0.0, 0.0]);
    }

    #[test]
    fn single_segment_always_selected() {
        let mut rng = stream(2, Purpose::Init);
        let bank = DendriteBank::init(5, 1, 4, &mut rng).unwrap();
        let sel = bank.select(&[0.1, -2.0, 3.0, 0.5]).unwrap();
        assert!(sel.segments.iter().all(|&s| s == 0));
    }

    #[test]
    fn empty_bank_is_an_error() {
        let bank = DendriteBank::new(3, 0, 4, vec![]).unwrap();
        assert!(matches!(bank.select(&[0.0; 4]), Err(Error::Empty(_))));
    }

    #[test]
    fn wrong_context_length_is_an_error() {
        let bank = DendriteBank::new(1, 1, 2, vec![1.0, 1.0]).unwrap();
        assert!(bank.select(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn selection_invariant_to_positive_context_scaling(
            seed in 0u64..1000,
            ctx in proptest::collection::vec(-1.0f64..1.0, 6),
            alpha in 0.01f64..100.0,
        ) {
            let mut rng = stream(seed, Purpose::Init);
            let bank = DendriteBank::init(4, 3, 6, &mut rng).unwrap();
            let c: Vec<Real> = ctx.iter().map(|&v| v as Real).collect();
            let scaled: Vec<Real> = c.iter().map(|v| v * alpha as Real).collect();
            prop_assert_eq!(bank.select(&c).unwrap().segments, bank.select(&scaled).unwrap().segments);
        }
    }
}
