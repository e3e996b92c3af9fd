//! Task prototypes and nearest-prototype task inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Real;

/// Element-wise mean of a task's inputs.
pub fn compute_prototype<'a, I>(samples: I) -> Result<Vec<Real>>
where
    I: IntoIterator<Item = &'a [Real]>,
{
    let mut iter = samples.into_iter();
    let first = iter.next().ok_or(Error::Empty("task sample set"))?;
    let mut sum = first.to_vec();
    let mut n = 1usize;
    for x in iter {
        if x.len() != sum.len() {
            return Err(Error::shape(
                "compute_prototype",
                format!("sample of length {} among length {}", x.len(), sum.len()),
            ));
        }
        for (s, v) in sum.iter_mut().zip(x) {
            *s += v;
        }
        n += 1;
    }
    let inv = 1.0 / n as Real;
    sum.iter_mut().for_each(|s| *s *= inv);
    Ok(sum)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextStore {
    prototypes: Vec<(usize, Vec<Real>)>,
}

impl ContextStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores (or replaces) the prototype of `task_id`.
    pub fn insert(&mut self, task_id: usize, prototype: Vec<Real>) -> Result<()> {
        if let Some((_, p)) = self.prototypes.first() {
            if p.len() != prototype.len() {
                return Err(Error::shape(
                    "ContextStore::insert",
                    format!("prototype of length {} in a store of length {}", prototype.len(), p.len()),
                ));
            }
        }
        if !prototype.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("prototype has non-finite values".into()));
        }
        match self.prototypes.iter_mut().find(|(id, _)| *id == task_id) {
            Some(slot) => slot.1 = prototype,
            None => self.prototypes.push((task_id, prototype)),
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn get(&self, task_id: usize) -> Option<&[Real]> {
        self.prototypes
            .iter()
            .find(|(id, _)| *id == task_id)
            .map(|(_, p)| p.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[Real])> {
        self.prototypes.iter().map(|(id, p)| (*id, p.as_slice()))
    }

    /// Position (insertion order) of the prototype nearest to `x`.
    pub fn nearest_index(&self, x: &[Real]) -> Result<usize> {
        if self.prototypes.is_empty() {
            return Err(Error::Empty("context store"));
        }
        let mut best = (0, Real::INFINITY);
        for (i, (_, p)) in self.prototypes.iter().enumerate() {
            if p.len() != x.len() {
                return Err(Error::shape(
                    "infer_context",
                    format!("input of length {} for prototypes of length {}", x.len(), p.len()),
                ));
            }
            let d: Real = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    pub fn prototype_at(&self, index: usize) -> (usize, &[Real]) {
        let (id, p) = &self.prototypes[index];
        (*id, p)
    }
}

/// Task whose prototype is nearest to `x` in Euclidean distance (earliest
/// stored task on ties).
pub fn infer_context<'a>(store: &'a ContextStore, x: &[Real]) -> Result<(usize, &'a [Real])> {
    let i = store.nearest_index(x)?;
    Ok(store.prototype_at(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_of_two() {
        let s: [&[Real]; 2] = [&[0.0, 2.0], &[2.0, 0.0]];
        assert_eq!(compute_prototype(s).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn single_sample_is_its_own_prototype() {
        let s: [&[Real]; 1] = [&[0.25, -3.0, 7.5]];
        assert_eq!(compute_prototype(s).unwrap(), vec![0.25, -3.0, 7.5]);
    }

    #[test]
    fn empty_task_is_an_error() {
        assert!(matches!(compute_prototype(std::iter::empty()), Err(Error::Empty(_))));
    }

    #[test]
    fn matches_two_pass_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<Vec<Real>> = (0..1000)
            .map(|_| (0..16).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let proto = compute_prototype(samples.iter().map(|v| v.as_slice())).unwrap();
        // Two-pass oracle: mean, then correct by the mean residual.
        for d in 0..16 {
            let n = samples.len() as Real;
            let m0: Real = samples.iter().map(|s| s[d]).sum::<Real>() / n;
            let corr: Real = samples.iter().map(|s| s[d] - m0).sum::<Real>() / n;
            assert!((proto[d] - (m0 + corr)).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_prototype() {
        let mut store = ContextStore::new();
        store.insert(1, vec![1.0, 1.0]).unwrap();
        store.insert(2, vec![-1.0, -1.0]).unwrap();
        assert_eq!(infer_context(&store, &[0.9, 1.1]).unwrap().0, 1);
        assert_eq!(infer_context(&store, &[-1.0, -1.0]).unwrap().0, 2);
    }

    #[test]
    fn ties_go_to_earliest_task() {
        let mut store = ContextStore::new();
        store.insert(0, vec![1.0, 0.0]).unwrap();
        store.insert(1, vec![-1.0, 0.0]).unwrap();
        assert_eq!(infer_context(&store, &[0.0, 5.0]).unwrap().0, 0);
    }

    #[test]
    fn empty_store_is_an_error() {
        assert!(matches!(infer_context(&ContextStore::new(), &[0.0]), Err(Error::Empty(_))));
    }

    proptest! {
        #[test]
        fn translation_equivariant(
            protos in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..5),
            x in proptest::collection::vec(-5.0f64..5.0, 3),
            shift in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let mut a = ContextStore::new();
            let mut b = ContextStore::new();
            for (i, p) in protos.iter().enumerate() {
                a.insert(i, p.iter().map(|&v| v as Real).collect()).unwrap();
                b.insert(i, p.iter().zip(&shift).map(|(v, s)| (v + s) as Real).collect()).unwrap();
            }
            let xa: Vec<Real> = x.iter().map(|&v| v as Real).collect();
            let xb: Vec<Real> = x.iter().zip(&shift).map(|(v, s)| (v + s) as Real).collect();
            // Distances can differ in the last ulp after shifting; compare distances instead of ids.
            let ia = a.nearest_index(&xa).unwrap();
            let ib = b.nearest_index(&xb).unwrap();
            let dist = |s: &ContextStore, i: usize, x: &[Real]| -> Real {
                s.prototype_at(i).1.iter().zip(x).map(|(p, v)| (p - v) * (p - v)).sum()
            };
            prop_assert!((dist(&a, ia, &xa) - dist(&a, ib, &xa)).abs() < 1e-9);
        }

        #[test]
        fn new_prototype_does_not_steal_strictly_closer_points(
            p0 in proptest::collection::vec(-5.0f64..5.0, 3),
            p1 in proptest::collection::vec(-5.0f64..5.0, 3),
            x in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let to_r = |v: &Vec<f64>| v.iter().map(|&a| a as Real).collect::<Vec<Real>>();
            let mut store = ContextStore::new();
            store.insert(0, to_r(&p0)).unwrap();
            let before = infer_context(&store, &to_r(&x)).unwrap().0;
            let d = |p: &Vec<f64>| p.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            store.insert(1, to_r(&p1)).unwrap();
            if d(&p0) < d(&p1) {
                prop_assert_eq!(infer_context(&store, &to_r(&x)).unwrap().0, before);
            }
        }
    }
}
