//! Pixel transforms used to derive tasks from a base dataset.

use serde::{Deserialize, Serialize};

use crate::numerics::Real;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// Rotates a square `side × side` image counter-clockwise by `degrees` about
/// its centre. Pixels sampled from outside the source are 0.
pub fn rotate_image(img: &[Real], side: usize, degrees: Real, interp: Interpolation) -> Vec<Real> {
    debug_assert_eq!(img.len(), side * side);
    let c = (side as f64 - 1.0) / 2.0;
    let (s, co) = (degrees as f64).to_radians().sin_cos();
    let at = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r as usize >= side || col as usize >= side {
            0.0
        } else {
            img[r as usize * side + col as usize] as f64
        }
    };
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for col in 0..side {
            // Inverse map: rotate the destination coordinate back by -angle.
            let x = col as f64 - c;
            let y = c - r as f64;
            let sx = co * x + s * y;
            let sy = -s * x + co * y;
            let src_col = sx + c;
            let src_row = c - sy;
            let v = match interp {
                Interpolation::Nearest => at(src_row.round() as isize, src_col.round() as isize),
                Interpolation::Bilinear => {
                    let r0 = src_row.floor();
                    let c0 = src_col.floor();
                    let fr = src_row - r0;
                    let fc = src_col - c0;
                    let (r0, c0) = (r0 as isize, c0 as isize);
                    (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1))
                        + fr * ((1.0 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1))
                }
            };
            out[r * side + col] = v.clamp(0.0, 1.0) as Real;
        }
    }
    out
}

/// `out[i] = img[perm[i]]`.
pub fn permute_pixels(img: &[Real], perm: &[usize]) -> Vec<Real> {
    perm.iter().map(|&p| img[p]).collect()
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
