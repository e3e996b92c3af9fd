use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{rng, Matrix, Real};

/// Feed-forward layer obeying Dale's principle with subtractive inhibition.
///
/// `z = (W_ee − W_ei·W_ie)·h + b`. All three weight groups are kept
/// non-negative; the `n_i` inhibitory units are internal to the layer, only
/// the `n_e` excitatory outputs leave it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DannLayer {
    pub w_ee: Matrix,
    pub w_ie: Matrix,
    pub w_ei: Matrix,
    pub bias: Vec<Real>,
    /// Connection masks (1 keeps, 0 prunes) for `w_ee`, `w_ie`, `w_ei`.
    pub masks: Option<[Matrix; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DannGrads {
    pub w_ee: Matrix,
    pub w_ie: Matrix,
    pub w_ei: Matrix,
    pub bias: Vec<Real>,
}

impl DannLayer {
    pub fn new(w_ee: Matrix, w_ie: Matrix, w_ei: Matrix, bias: Vec<Real>) -> Result<Self> {
        let (n_e, n_in) = w_ee.shape();
        let n_i = w_ie.rows();
        if w_ie.cols() != n_in || w_ei.shape() != (n_e, n_i) || bias.len() != n_e {
            return Err(Error::shape(
                "DannLayer::new",
                format!(
                    "W_ee {:?}, W_ie {:?}, W_ei {:?}, b {}",
                    w_ee.shape(),
                    w_ie.shape(),
                    w_ei.shape(),
                    bias.len()
                ),
            ));
        }
        let negative = [&w_ee, &w_ie, &w_ei].iter().any(|m| m.min() < 0.0);
        if negative {
            return Err(Error::InvalidArgument(
                "DANN weight groups must be non-negative".into(),
            ));
        }
        Ok(Self {
            w_ee,
            w_ie,
            w_ei,
            bias,
            masks: None,
        })
    }

    /// Random initialisation.
    ///
    /// `W_ee`, `W_ie` ~ |N(0, 2/n_in)|. Each row of `W_ei` is set so the
    /// expected effective weight `W_ee − W_ei·W_ie` of that row is zero,
    /// with 5% multiplicative noise. `sparsity` is the fraction of
    /// connections pruned (frozen at zero) in every group.
    pub fn init<R: Rng + ?Sized>(
        n_in: usize,
        n_e: usize,
        n_i: usize,
        sparsity: Real,
        rng: &mut R,
    ) -> Result<Self> {
        if n_in == 0 || n_e == 0 || n_i == 0 {
            return Err(Error::Config(format!(
                "DANN layer needs positive sizes, got n_in={n_in} n_e={n_e} n_i={n_i}"
            )));
        }
        let std = (2.0 / n_in as Real).sqrt();
        let half_normal = |rng: &mut R, n: usize| -> Vec<Real> {
            (0..n).map(|_| rng::normal(rng, 0.0, std).abs()).collect()
        };
        let mut w_ee = Matrix::new(n_e, n_in, half_normal(rng, n_e * n_in))?;
        let mut w_ie = Matrix::new(n_i, n_in, half_normal(rng, n_i * n_in))?;

        let masks = if sparsity > 0.0 {
            let mut draw = |r: usize, c: usize| -> Result<Matrix> {
                let keep = (0..r * c)
                    .map(|_| if rng.random::<f64>() as Real >= sparsity { 1.0 } else { 0.0 })
                    .collect();
                Matrix::new(r, c, keep)
            };
            let m = [draw(n_e, n_in)?, draw(n_i, n_in)?, draw(n_e, n_i)?];
            apply_mask(&mut w_ee, &m[0]);
            apply_mask(&mut w_ie, &m[1]);
            Some(m)
        } else {
            None
        };

        let ie_mean = mean(w_ie.as_slice()).max(Real::EPSILON);
        let mut w_ei = Matrix::zeros(n_e, n_i);
        for r in 0..n_e {
            let target = mean(w_ee.row(r)) / (n_i as Real * ie_mean);
            for v in w_ei.row_mut(r) {
                *v = (target * (1.0 + rng::normal(rng, 0.0, 0.05))).max(0.0);
            }
        }
        if let Some(m) = &masks {
            apply_mask(&mut w_ei, &m[2]);
        }

        Ok(Self {
            w_ee,
            w_ie,
            w_ei,
            bias: vec![0.0; n_e],
            masks,
        })
    }

    pub fn n_in(&self) -> usize {
        self.w_ee.cols()
    }

    pub fn n_e(&self) -> usize {
        self.w_ee.rows()
    }

    pub fn n_i(&self) -> usize {
        self.w_ie.rows()
    }

    /// Batch-major forward pass: `h` is `batch × n_in`.
    /// Returns the pre-activations `z` (`batch × n_e`) and the inhibitory
    /// drive `W_ie·h` (`batch × n_i`).
    pub fn forward(&self, h: &Matrix) -> Result<(Matrix, Matrix)> {
        if h.cols() != self.n_in() {
            return Err(Error::shape(
                "dann_forward",
                format!("input has {} features, layer expects {}", h.cols(), self.n_in()),
            ));
        }
        let inhib = h.matmul_nt(&self.w_ie)?;
        let mut z = h.matmul_nt(&self.w_ee)?;
        z.add_scaled(-1.0, &inhib.matmul_nt(&self.w_ei)?)?;
        z.add_row_vector(&self.bias)?;
        Ok((z, inhib))
    }

    /// Gradients of the loss given `grad_z = ∂L/∂z`, plus `∂L/∂h`.
    pub fn backward(
        &self,
        h: &Matrix,
        inhib: &Matrix,
        grad_z: &Matrix,
    ) -> Result<(Matrix, DannGrads)> {
        let mut w_ee = grad_z.matmul_tn(h)?;
        let bias = grad_z.col_sums();
        // ∂L/∂(W_ie·h) = −grad_z·W_ei
        let mut grad_inhib = grad_z.matmul(&self.w_ei)?;
        grad_inhib.scale(-1.0);
        let mut w_ei = grad_z.matmul_tn(inhib)?;
        w_ei.scale(-1.0);
        let mut w_ie = grad_inhib.matmul_tn(h)?;

        let mut grad_h = grad_z.matmul(&self.w_ee)?;
        grad_h.add_scaled(1.0, &grad_inhib.matmul(&self.w_ie)?)?;

        if let Some([m_ee, m_ie, m_ei]) = &self.masks {
            apply_mask(&mut w_ee, m_ee);
            apply_mask(&mut w_ie, m_ie);
            apply_mask(&mut w_ei, m_ei);
        }
        Ok((
            grad_h,
            DannGrads {
                w_ee,
                w_ie,
                w_ei,
                bias,
            },
        ))
    }

    /// Effective excitatory weight matrix `W_ee − W_ei·W_ie`.
    pub fn effective_weights(&self) -> Result<Matrix> {
        let mut w = self.w_ee.clone();
        w.add_scaled(-1.0, &self.w_ei.matmul(&self.w_ie)?)?;
        Ok(w)
    }
}

/// Single-input convenience wrapper over [`DannLayer::forward`].
pub fn dann_forward(layer: &DannLayer, h_in: &Matrix) -> Result<Matrix> {
    layer.forward(h_in).map(|(z, _)| z)
}

pub(crate) fn apply_mask(w: &mut Matrix, mask: &Matrix) {
    for (v, m) in w.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *v *= m;
    }
}

fn mean(v: &[Real]) -> Real {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<Real>() / v.len() as Real
    }
}
