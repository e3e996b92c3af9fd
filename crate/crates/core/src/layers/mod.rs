//! Hidden-layer forward and backward passes.
//!
//! A [`HiddenLayer`] chains a feed-forward map (Dale's-principle or point
//! neuron), optional dendritic gating `z·σ(u_κ·c)`, heterogeneous dropout and
//! finally k-WTA (or ReLU). Dropout masks units *before* the winners are
//! picked, so k-WTA only competes among survivors.
//!
//! All matrices are batch-major: one sample per row.

mod dann;
mod dendrites;
mod dropout;
mod kwta;
mod point;

pub use dann::{dann_forward, DannGrads, DannLayer};
pub use dendrites::{dendrite_select, DendriteBank, Selection};
pub use dropout::{refresh_keep_probs, DropoutState};
pub use kwta::top_k_mask;
pub use point::{PointGrads, PointLayer};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, sigmoid_prime, Matrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Kwta { k: usize },
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { dropout: bool },
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeedForward {
    Dann(DannLayer),
    Point(PointLayer),
}

impl FeedForward {
    pub fn n_in(&self) -> usize {
        match self {
            FeedForward::Dann(l) => l.n_in(),
            FeedForward::Point(l) => l.n_in(),
        }
    }

    /// Number of units the layer exposes downstream.
    pub fn n_out(&self) -> usize {
        match self {
            FeedForward::Dann(l) => l.n_e(),
            FeedForward::Point(l) => l.n_out(),
        }
    }
}

/// Context vectors for a batch: a small set of distinct vectors and the
/// index of the one each sample uses.
#[derive(Debug, Clone, PartialEq)]
pub struct Contexts {
    pub vectors: Vec<Vec<Real>>,
    pub of_sample: Vec<usize>,
}

impl Contexts {
    /// Every sample of the batch shares `context`.
    pub fn shared(context: Vec<Real>, batch: usize) -> Self {
        Self {
            vectors: vec![context],
            of_sample: vec![0; batch],
        }
    }

    pub fn new(vectors: Vec<Vec<Real>>, of_sample: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = of_sample.iter().find(|&&i| i >= vectors.len()) {
            return Err(Error::Index {
                index: bad,
                len: vectors.len(),
            });
        }
        Ok(Self { vectors, of_sample })
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct LayerActivationRecord {
    pub input: Matrix,
    /// Inhibitory drive `W_ie·h` (Dale layers only).
    pub inhibitory: Option<Matrix>,
    pub pre_mod: Matrix,
    /// Winning segment per (context, unit), row-major `n_contexts × units`.
    pub selected_segments: Option<Vec<usize>>,
    /// Signed winning responses, `n_contexts × units`.
    pub responses: Option<Matrix>,
    pub contexts: Option<Contexts>,
    pub dropout_mask: Vec<bool>,
    /// Units that passed the activation, `batch × units` as 0/1.
    pub kwta_mask: Matrix,
    pub output: Matrix,
    pub train_mode: bool,
    version: u64,
}

impl LayerActivationRecord {
    /// Gate `σ(u_κ·c)` for `(sample, unit)`; 1 without dendrites.
    pub fn gate(&self, sample: usize, unit: usize) -> Real {
        match (&self.responses, &self.contexts) {
            (Some(r), Some(c)) => sigmoid(r.get(c.of_sample[sample], unit)),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedForwardGrads {
    Dann(DannGrads),
    Point(PointGrads),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub ff: FeedForwardGrads,
    /// Same layout as [`DendriteBank::weights`]; only winning segments are non-zero.
    pub dendrites: Option<Vec<Real>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub ff: FeedForward,
    pub dendrites: Option<DendriteBank>,
    pub activation: Activation,
    pub dropout: DropoutState,
    #[serde(skip)]
    version: u64,
}

impl HiddenLayer {
    pub fn new(
        ff: FeedForward,
        dendrites: Option<DendriteBank>,
        activation: Activation,
        rho: Real,
    ) -> Result<Self> {
        let n = ff.n_out();
        if let Activation::Kwta { k } = activation {
            if k == 0 || k > n {
                return Err(Error::Config(format!("k-WTA needs 0 < k <= {n}, got k={k}")));
            }
        }
        if let Some(bank) = &dendrites {
            if bank.units() != n {
                return Err(Error::shape(
                    "HiddenLayer::new",
                    format!("{} dendrite units for {n} layer units", bank.units()),
                ));
            }
        }
        Ok(Self {
            ff,
            dendrites,
            activation,
            dropout: DropoutState::new(n, rho),
            version: 0,
        })
    }

    pub fn n_in(&self) -> usize {
        self.ff.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.ff.n_out()
    }

    /// Invalidates records produced before a parameter change.
    pub fn touch(&mut self) {
        self.version = self.version.wrapping_add(1);
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        h_in: &Matrix,
        contexts: Option<&Contexts>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix, LayerActivationRecord)> {
        let batch = h_in.rows();
        let n = self.n_out();
        let (z, inhibitory) = match &self.ff {
            FeedForward::Dann(l) => {
                let (z, i) = l.forward(h_in)?;
                (z, Some(i))
            }
            FeedForward::Point(l) => (l.forward(h_in)?, None),
        };

        let (selected_segments, responses, contexts) = match &self.dendrites {
            None => (None, None, None),
            Some(bank) => {
                let ctx = contexts.ok_or(Error::InvalidArgument(
                    "layer has dendrites but no context was supplied".into(),
                ))?;
                if ctx.of_sample.len() != batch {
                    return Err(Error::shape(
                        "layer_forward",
                        format!("{} context assignments for batch of {batch}", ctx.of_sample.len()),
                    ));
                }
                let mut segs = Vec::with_capacity(ctx.vectors.len() * n);
                let mut resp = Vec::with_capacity(ctx.vectors.len() * n);
                for c in &ctx.vectors {
                    let sel = bank.select(c)?;
                    segs.extend(sel.segments);
                    resp.extend(sel.responses);
                }
                (
                    Some(segs),
                    Some(Matrix::new(ctx.vectors.len(), n, resp)?),
                    Some(ctx.clone()),
                )
            }
        };

        let mut modulated = z.clone();
        if let (Some(r), Some(ctx)) = (&responses, &contexts) {
            let gates = r.map(sigmoid);
            for s in 0..batch {
                let g = gates.row(ctx.of_sample[s]);
                for (m, gj) in modulated.row_mut(s).iter_mut().zip(g) {
                    *m *= gj;
                }
            }
        }

        let (train_mode, dropout_mask) = match mode {
            Mode::Train { dropout: true } => (true, self.dropout.sample_mask(rng)),
            Mode::Train { dropout: false } => (true, vec![true; n]),
            Mode::Eval => (false, vec![true; n]),
        };

        let mut output = Matrix::zeros(batch, n);
        let mut kwta_mask = Matrix::zeros(batch, n);
        for s in 0..batch {
            let m = modulated.row(s);
            let mask: Vec<bool> = match self.activation {
                Activation::Kwta { k } => top_k_mask(m, &dropout_mask, k),
                Activation::Relu => m
                    .iter()
                    .zip(&dropout_mask)
                    .map(|(&v, &keep)| keep && v > 0.0)
                    .collect(),
            };
            let out = output.row_mut(s);
            for j in 0..n {
                if mask[j] {
                    out[j] = m[j];
                }
            }
            let km = kwta_mask.row_mut(s);
            for j in 0..n {
                km[j] = if mask[j] { 1.0 } else { 0.0 };
            }
        }

        let record = LayerActivationRecord {
            input: h_in.clone(),
            inhibitory,
            pre_mod: z,
            selected_segments,
            responses,
            contexts,
            dropout_mask,
            kwta_mask,
            output: output.clone(),
            train_mode,
            version: self.version,
        };
        Ok((output, record))
    }

    pub fn backward(&self, record: &LayerActivationRecord, grad_out: &Matrix) -> Result<(Matrix, LayerGrads)> {
        if record.version != self.version {
            return Err(Error::InvalidArgument(
                "stale activation record: layer parameters changed since the forward pass".into(),
            ));
        }
        if grad_out.shape() != record.output.shape() {
            return Err(Error::shape(
                "layer_backward",
                format!("gradient {:?} for output {:?}", grad_out.shape(), record.output.shape()),
            ));
        }
        let (batch, n) = grad_out.shape();

        // ∂L/∂m on active units.
        let mut grad_mod = grad_out.clone();
        for (g, m) in grad_mod.as_mut_slice().iter_mut().zip(record.kwta_mask.as_slice()) {
            *g *= m;
        }

        let mut grad_z = grad_mod.clone();
        let mut dendrite_grads = None;
        if let (Some(bank), Some(resp), Some(ctx), Some(segs)) = (
            &self.dendrites,
            &record.responses,
            &record.contexts,
            &record.selected_segments,
        ) {
            // Σ over samples sharing a context of ∂L/∂m · z · σ'(r).
            let mut coeff = Matrix::zeros(ctx.vectors.len(), n);
            for s in 0..batch {
                let ci = ctx.of_sample[s];
                let r = resp.row(ci);
                let z = record.pre_mod.row(s);
                let gm = grad_mod.row(s);
                let gz = grad_z.row_mut(s);
                let acc = coeff.row_mut(ci);
                for j in 0..n {
                    if gm[j] == 0.0 {
                        continue;
                    }
                    gz[j] = gm[j] * sigmoid(r[j]);
                    acc[j] += gm[j] * z[j] * sigmoid_prime(r[j]);
                }
            }
            let mut du = vec![0.0; bank.weights().len()];
            let (segments, dim) = (bank.segments(), bank.dim());
            for (ci, c) in ctx.vectors.iter().enumerate() {
                for j in 0..n {
                    let a = coeff.get(ci, j);
                    if a == 0.0 {
                        continue;
                    }
                    let o = (j * segments + segs[ci * n + j]) * dim;
                    for (d, cv) in du[o..o + dim].iter_mut().zip(c) {
                        *d += a * cv;
                    }
                }
            }
            dendrite_grads = Some(du);
        }

        let (grad_in, ff) = match &self.ff {
            FeedForward::Dann(l) => {
                let inhib = record.inhibitory.as_ref().ok_or(Error::InvalidArgument(
                    "record lacks inhibitory drive for a Dale layer".into(),
                ))?;
                let (gh, g) = l.backward(&record.input, inhib, &grad_z)?;
                (gh, FeedForwardGrads::Dann(g))
            }
            FeedForward::Point(l) => {
                let (gh, g) = l.backward(&record.input, &grad_z)?;
                (gh, FeedForwardGrads::Point(g))
            }
        };
        Ok((
            grad_in,
            LayerGrads {
                ff,
                dendrites: dendrite_grads,
            },
        ))
    }
}

/// Adds, per unit, the number of samples in which it passed k-WTA with a
/// non-zero output. Only training-mode records are accepted.
pub fn update_activation_counts(drop: &mut DropoutState, record: &LayerActivationRecord) -> Result<()> {
    if !record.train_mode {
        return Err(Error::InvalidArgument(
            "activation counts are only updated from training batches".into(),
        ));
    }
    drop.add_counts(&fired_counts(&record.output))
}

/// Per-unit count of samples with a non-zero activation.
pub fn fired_counts(output: &Matrix) -> Vec<Real> {
    let mut counts = vec![0.0; output.cols()];
    for row in output.iter_rows() {
        for (c, &v) in counts.iter_mut().zip(row) {
            if v != 0.0 {
                *c += 1.0;
            }
        }
    }
    counts
}
