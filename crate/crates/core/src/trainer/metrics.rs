//! Continual-learning metrics over the accuracy matrix `A[i][j]`: accuracy
//! on task `j` after training task `i`.

use crate::numerics::Real;

/// Accuracy matrix; `None` for cells that were not measured.
pub type AccuracyMatrix = Vec<Vec<Option<Real>>>;

/// Mean accuracy over all tasks after the last trained task.
pub fn average_accuracy(a: &AccuracyMatrix) -> Real {
    let Some(last) = a.iter().rev().find(|row| row.iter().any(Option::is_some)) else {
        return 0.0;
    };
    let vals: Vec<Real> = last.iter().flatten().copied().collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<Real>() / vals.len() as Real
    }
}

/// Mean over tasks `j < T` of `max_{i ≥ j} A[i][j] − A[T][j]`, with `T` the
/// last task.
pub fn forgetting(a: &AccuracyMatrix) -> Real {
    let t = a.len();
    if t < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut n = 0;
    for j in 0..t - 1 {
        let Some(last) = a[t - 1][j] else { continue };
        let best = (j..t).filter_map(|i| a[i][j]).fold(last, Real::max);
        total += best - last;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as Real
    }
}

/// Mean over tasks `j ≥ 1` of `A[j−1][j] − chance`: how well the model does
/// on a task just before training on it. `None` when nothing was measured.
pub fn forward_transfer(a: &AccuracyMatrix, chance: Real) -> Option<Real> {
    let vals: Vec<Real> = (1..a.len())
        .filter_map(|j| a[j - 1].get(j).copied().flatten())
        .map(|v| v - chance)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<Real>() / vals.len() as Real)
    }
}

const SMOOTHING: Real = 1e-12;

fn normalise(counts: &[Real]) -> Vec<Real> {
    let total: Real = counts.iter().sum::<Real>() + SMOOTHING * counts.len() as Real;
    counts.iter().map(|c| (c + SMOOTHING) / total).collect()
}

/// Symmetric KL divergence between two activation-count histograms.
pub fn activation_overlap(p_counts: &[Real], q_counts: &[Real]) -> Real {
    assert_eq!(p_counts.len(), q_counts.len(), "histograms over different units");
    let p = normalise(p_counts);
    let q = normalise(q_counts);
    p.iter()
        .zip(&q)
        .map(|(&pi, &qi)| pi * (pi / qi).ln() + qi * (qi / pi).ln())
        .sum()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[Real]) -> (Real, Real) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as Real;
    let mean = values.iter().sum::<Real>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<Real>() / (n - 1.0);
    (mean, var.sqrt())
}
