use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dann::apply_mask;
use crate::error::{Error, Result};
use crate::numerics::{rng, Matrix, Real};

/// Standard point-neuron affine layer with signed weights: `z = W·h + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLayer {
    pub weights: Matrix,
    pub bias: Vec<Real>,
    pub mask: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointGrads {
    pub weights: Matrix,
    pub bias: Vec<Real>,
}

impl PointLayer {
    pub fn new(weights: Matrix, bias: Vec<Real>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape(
                "PointLayer::new",
                format!("bias of {} for {} units", bias.len(), weights.rows()),
            ));
        }
        Ok(Self {
            weights,
            bias,
            mask: None,
        })
    }

    /// Weights and biases ~ U(−1/√n_in, 1/√n_in); `sparsity` prunes that
    /// fraction of weights permanently.
    pub fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, sparsity: Real, rng: &mut R) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Config(format!(
                "layer needs positive sizes, got n_in={n_in} n_out={n_out}"
            )));
        }
        let bound = 1.0 / (n_in as Real).sqrt();
        let mut weights = Matrix::new(
            n_out,
            n_in,
            (0..n_out * n_in).map(|_| rng::uniform(rng, -bound, bound)).collect(),
        )?;
        let bias = (0..n_out).map(|_| rng::uniform(rng, -bound, bound)).collect();
        let mask = if sparsity > 0.0 {
            let keep = (0..n_out * n_in)
                .map(|_| if rng.random::<f64>() as Real >= sparsity { 1.0 } else { 0.0 })
                .collect();
            let mask = Matrix::new(n_out, n_in, keep)?;
            apply_mask(&mut weights, &mask);
            Some(mask)
        } else {
            None
        };
        Ok(Self { weights, bias, mask })
    }

    pub fn n_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.rows()
    }

    /// `h` is `batch × n_in`; returns `batch × n_out`.
    pub fn forward(&self, h: &Matrix) -> Result<Matrix> {
        if h.cols() != self.n_in() {
            return Err(Error::shape(
                "point_forward",
                format!("input has {} features, layer expects {}", h.cols(), self.n_in()),
            ));
        }
        let mut z = h.matmul_nt(&self.weights)?;
        z.add_row_vector(&self.bias)?;
        Ok(z)
    }

    pub fn backward(&self, h: &Matrix, grad_z: &Matrix) -> Result<(Matrix, PointGrads)> {
        let mut weights = grad_z.matmul_tn(h)?;
        if let Some(m) = &self.mask {
            apply_mask(&mut weights, m);
        }
        let bias = grad_z.col_sums();
        let grad_h = grad_z.matmul(&self.weights)?;
        Ok((grad_h, PointGrads { weights, bias }))
    }
}
