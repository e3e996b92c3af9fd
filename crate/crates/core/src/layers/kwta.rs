use std::cmp::Ordering;

use crate::numerics::Real;

/// Marks the `k` largest eligible values. Ties go to the lower index; when
/// fewer than `k` units are eligible, all of them are marked.
pub fn top_k_mask(values: &[Real], eligible: &[bool], k: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&j| eligible[j]).collect();
    let mut mask = vec![false; values.len()];
    if idx.len() <= k {
        idx.into_iter().for_each(|j| mask[j] = true);
        return mask;
    }
    let order = |a: &usize, b: &usize| -> Ordering {
        values[*b].total_cmp(&values[*a]).then(a.cmp(b))
    };
    if k > 0 {
        idx.select_nth_unstable_by(k - 1, order);
        idx[..k].iter().for_each(|&j| mask[j] = true);
    }
    mask
}
