//! The full network: hidden layers followed by a linear classifier, with a
//! flat view over every trainable parameter group.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    Activation, Contexts, DannLayer, DendriteBank, FeedForward, FeedForwardGrads, HiddenLayer,
    LayerActivationRecord, Mode, PointLayer,
};
use crate::numerics::{softmax_cross_entropy, Matrix, Real};

/// Inhibitory share of each hidden layer when not given explicitly
/// (204 of 2048 units).
pub const INHIBITORY_FRACTION: Real = 204.0 / 2048.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// Point neurons without dendrites (SGD / Joint / Standard-BioANN rows).
    Standard,
    /// Dale's-principle layers and active dendrites, subject to the toggles.
    Bio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Kwta,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mechanisms {
    pub dale: bool,
    pub dendrites: bool,
    pub hebbian: bool,
    pub dropout: bool,
    pub si: bool,
    pub er: bool,
    pub cr: bool,
}

impl Default for Mechanisms {
    fn default() -> Self {
        Self::all()
    }
}

impl Mechanisms {
    pub fn all() -> Self {
        Self {
            dale: true,
            dendrites: true,
            hebbian: true,
            dropout: true,
            si: true,
            er: true,
            cr: true,
        }
    }

    pub fn none() -> Self {
        Self {
            dale: false,
            dendrites: false,
            hebbian: false,
            dropout: false,
            si: false,
            er: false,
            cr: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mode: ModelMode,
    /// Total units per hidden layer.
    pub hidden: Vec<usize>,
    /// Inhibitory units per hidden layer (Dale layers only); derived from
    /// [`INHIBITORY_FRACTION`] when absent.
    pub inhibitory: Option<Vec<usize>>,
    /// Fraction of units kept by k-WTA, per hidden layer.
    pub k_ratio: Vec<Real>,
    pub activation: ActivationKind,
    /// Fraction of connections pruned at initialisation.
    pub weight_sparsity: Real,
    /// Dendritic segments per unit; defaults to the number of tasks.
    pub segments: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: ModelMode::Bio,
            hidden: vec![2048, 2048],
            inhibitory: None,
            k_ratio: vec![0.05, 0.05],
            activation: ActivationKind::Kwta,
            weight_sparsity: 0.0,
            segments: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, mech: &Mechanisms) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden sizes must be positive, got {:?}", self.hidden));
        }
        if self.k_ratio.len() != self.hidden.len() {
            return bad(format!(
                "k_ratio has {} entries for {} hidden layers",
                self.k_ratio.len(),
                self.hidden.len()
            ));
        }
        if self.k_ratio.iter().any(|&k| !(k > 0.0 && k <= 1.0)) {
            return bad(format!("k_ratio entries must be in (0, 1], got {:?}", self.k_ratio));
        }
        if !(0.0..1.0).contains(&self.weight_sparsity) {
            return bad(format!("weight_sparsity must be in [0, 1), got {}", self.weight_sparsity));
        }
        if self.segments == Some(0) {
            return bad("segments must be positive".into());
        }
        if let Some(inh) = &self.inhibitory {
            if inh.len() != self.hidden.len() {
                return bad("inhibitory must list one count per hidden layer".into());
            }
            if inh.iter().zip(&self.hidden).any(|(&i, &h)| i == 0 || i >= h) {
                return bad(format!("inhibitory counts {inh:?} must be in (0, hidden)"));
            }
        }
        if self.mode == ModelMode::Standard && (mech.dale || mech.dendrites || mech.hebbian) {
            return bad("standard mode has no Dale layers, dendrites or Hebbian updates".into());
        }
        if mech.hebbian && !mech.dendrites {
            return bad("hebbian requires dendrites".into());
        }
        if mech.cr && !mech.er {
            return bad("cr requires er".into());
        }
        Ok(())
    }

    /// `(excitatory, inhibitory)` units of hidden layer `l`.
    pub fn split(&self, l: usize, dale: bool) -> (usize, usize) {
        let h = self.hidden[l];
        if !dale {
            return (h, 0);
        }
        let n_i = match &self.inhibitory {
            Some(v) => v[l],
            None => ((h as Real * INHIBITORY_FRACTION).round() as usize).clamp(1, h - 1),
        };
        (h - n_i, n_i)
    }

    pub fn k_for(&self, l: usize, units: usize) -> usize {
        ((self.k_ratio[l] * units as Real).round() as usize).clamp(1, units)
    }
}

/// Role of a parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    /// Excitatory-to-excitatory weights `W_ee`.
    Wee,
    /// Excitatory input to inhibitory units `W_ie`.
    Wie,
    /// Inhibitory-to-excitatory weights `W_ei`.
    Wei,
    /// Signed point-neuron weights.
    Weight,
    Bias,
    Dendrite,
}

impl ParamKind {
    /// Groups kept non-negative by projection.
    pub fn sign_constrained(self) -> bool {
        matches!(self, ParamKind::Wee | ParamKind::Wie | ParamKind::Wei)
    }
}

/// Static description of one parameter group. `layer` counts hidden layers
/// from 0; the classifier is `layer == hidden.len()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub kind: ParamKind,
    pub layer: usize,
    pub len: usize,
    /// Excitatory units of the owning layer.
    pub n_e: usize,
    /// Input dimension of the owning layer.
    pub fan_in: usize,
}

/// Mutable access to one parameter group and its connection mask.
pub struct ParamMut<'a> {
    pub spec: ParamSpec,
    pub values: &'a mut [Real],
    pub mask: Option<&'a [Real]>,
}

/// Gradients aligned with [`Model::param_specs`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub groups: Vec<Vec<Real>>,
}

impl Gradients {
    pub fn zeros(specs: &[ParamSpec]) -> Self {
        Self {
            groups: specs.iter().map(|s| vec![0.0; s.len]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn norm(&self) -> Real {
        self.groups
            .iter()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<Real>()
            .sqrt()
    }

    pub fn scale(&mut self, alpha: Real) {
        self.groups
            .iter_mut()
            .flat_map(|g| g.iter_mut())
            .for_each(|x| *x *= alpha);
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub records: Vec<LayerActivationRecord>,
    pub last_hidden: Matrix,
    pub logits: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub hidden: Vec<HiddenLayer>,
    pub output: PointLayer,
}

impl Model {
    /// Builds a randomly initialised network.
    pub fn build<R: Rng + ?Sized>(
        cfg: &ModelConfig,
        mech: &Mechanisms,
        rho: &[Real],
        n_in: usize,
        n_classes: usize,
        segments: usize,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate(mech)?;
        if rho.len() != cfg.hidden.len() {
            return Err(Error::Config(format!(
                "rho has {} entries for {} hidden layers",
                rho.len(),
                cfg.hidden.len()
            )));
        }
        let dale = cfg.mode == ModelMode::Bio && mech.dale;
        let dendrites = cfg.mode == ModelMode::Bio && mech.dendrites;
        let mut hidden = Vec::with_capacity(cfg.hidden.len());
        let mut fan_in = n_in;
        for l in 0..cfg.hidden.len() {
            let (n_e, n_i) = cfg.split(l, dale);
            let ff = if dale {
                FeedForward::Dann(DannLayer::init(fan_in, n_e, n_i, cfg.weight_sparsity, rng)?)
            } else {
                FeedForward::Point(PointLayer::init(fan_in, n_e, cfg.weight_sparsity, rng)?)
            };
            let bank = if dendrites {
                Some(DendriteBank::init(n_e, segments, n_in, rng)?)
            } else {
                None
            };
            let activation = match cfg.activation {
                ActivationKind::Kwta => Activation::Kwta { k: cfg.k_for(l, n_e) },
                ActivationKind::Relu => Activation::Relu,
            };
            hidden.push(HiddenLayer::new(ff, bank, activation, rho[l])?);
            fan_in = n_e;
        }
        let output = PointLayer::init(fan_in, n_classes, 0.0, rng)?;
        Ok(Self { hidden, output })
    }

    pub fn n_classes(&self) -> usize {
        self.output.n_out()
    }

    pub fn has_dendrites(&self) -> bool {
        self.hidden.iter().any(|l| l.dendrites.is_some())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Matrix,
        contexts: Option<&Contexts>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardPass> {
        let mut records = Vec::with_capacity(self.hidden.len());
        let mut h = x.clone();
        for layer in &self.hidden {
            let (out, rec) = layer.forward(&h, contexts, mode, rng)?;
            records.push(rec);
            h = out;
        }
        let logits = self.output.forward(&h)?;
        Ok(ForwardPass {
            records,
            last_hidden: h,
            logits,
        })
    }

    /// Back-propagates `∂L/∂logits` through the network.
    pub fn backward(&self, pass: &ForwardPass, grad_logits: &Matrix) -> Result<Gradients> {
        let (mut grad_h, out_g) = self.output.backward(&pass.last_hidden, grad_logits)?;
        let mut per_layer = Vec::with_capacity(self.hidden.len());
        for (layer, rec) in self.hidden.iter().zip(&pass.records).rev() {
            let (gin, g) = layer.backward(rec, &grad_h)?;
            per_layer.push(g);
            grad_h = gin;
        }
        per_layer.reverse();

        let mut groups = Vec::new();
        for g in per_layer {
            match g.ff {
                FeedForwardGrads::Dann(d) => {
                    groups.push(d.w_ee.into_vec());
                    groups.push(d.w_ie.into_vec());
                    groups.push(d.w_ei.into_vec());
                    groups.push(d.bias);
                }
                FeedForwardGrads::Point(p) => {
                    groups.push(p.weights.into_vec());
                    groups.push(p.bias);
                }
            }
            if let Some(du) = g.dendrites {
                groups.push(du);
            }
        }
        groups.push(out_g.weights.into_vec());
        groups.push(out_g.bias);
        Ok(Gradients { groups })
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        for (l, layer) in self.hidden.iter().enumerate() {
            let n_e = layer.n_out();
            let fan_in = layer.n_in();
            let spec = |kind, len| ParamSpec {
                kind,
                layer: l,
                len,
                n_e,
                fan_in,
            };
            match &layer.ff {
                FeedForward::Dann(d) => {
                    specs.push(spec(ParamKind::Wee, d.w_ee.as_slice().len()));
                    specs.push(spec(ParamKind::Wie, d.w_ie.as_slice().len()));
                    specs.push(spec(ParamKind::Wei, d.w_ei.as_slice().len()));
                    specs.push(spec(ParamKind::Bias, d.bias.len()));
                }
                FeedForward::Point(p) => {
                    specs.push(spec(ParamKind::Weight, p.weights.as_slice().len()));
                    specs.push(spec(ParamKind::Bias, p.bias.len()));
                }
            }
            if let Some(b) = &layer.dendrites {
                specs.push(spec(ParamKind::Dendrite, b.weights().len()));
            }
        }
        let l = self.hidden.len();
        let (n_out, fan_in) = (self.output.n_out(), self.output.n_in());
        for (kind, len) in [
            (ParamKind::Weight, self.output.weights.as_slice().len()),
            (ParamKind::Bias, self.output.bias.len()),
        ] {
            specs.push(ParamSpec {
                kind,
                layer: l,
                len,
                n_e: n_out,
                fan_in,
            });
        }
        specs
    }

    pub fn params(&self) -> Vec<&[Real]> {
        let mut out: Vec<&[Real]> = Vec::new();
        for layer in &self.hidden {
            match &layer.ff {
                FeedForward::Dann(d) => {
                    out.push(d.w_ee.as_slice());
                    out.push(d.w_ie.as_slice());
                    out.push(d.w_ei.as_slice());
                    out.push(&d.bias);
                }
                FeedForward::Point(p) => {
                    out.push(p.weights.as_slice());
                    out.push(&p.bias);
                }
            }
            if let Some(b) = &layer.dendrites {
                out.push(b.weights());
            }
        }
        out.push(self.output.weights.as_slice());
        out.push(&self.output.bias);
        out
    }

    /// Copy of every parameter group.
    pub fn snapshot(&self) -> Vec<Vec<Real>> {
        self.params().into_iter().map(|p| p.to_vec()).collect()
    }

    /// Mutable views over every group; invalidates outstanding forward records.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let specs = self.param_specs();
        let mut views: Vec<(&mut [Real], Option<&[Real]>)> = Vec::with_capacity(specs.len());
        for layer in self.hidden.iter_mut() {
            layer.touch();
            match &mut layer.ff {
                FeedForward::Dann(d) => {
                    let masks = d.masks.as_ref();
                    views.push((d.w_ee.as_mut_slice(), masks.map(|m| m[0].as_slice())));
                    views.push((d.w_ie.as_mut_slice(), masks.map(|m| m[1].as_slice())));
                    views.push((d.w_ei.as_mut_slice(), masks.map(|m| m[2].as_slice())));
                    views.push((&mut d.bias, None));
                }
                FeedForward::Point(p) => {
                    views.push((p.weights.as_mut_slice(), p.mask.as_ref().map(|m| m.as_slice())));
                    views.push((&mut p.bias, None));
                }
            }
            if let Some(b) = &mut layer.dendrites {
                views.push((b.weights_mut(), None));
            }
        }
        views.push((self.output.weights.as_mut_slice(), None));
        views.push((&mut self.output.bias, None));
        specs
            .into_iter()
            .zip(views)
            .map(|(spec, (values, mask))| ParamMut { spec, values, mask })
            .collect()
    }

    /// Dendrite banks, one slot per hidden layer.
    pub fn dendrite_banks_mut(&mut self) -> Vec<&mut DendriteBank> {
        self.hidden
            .iter_mut()
            .filter_map(|l| {
                l.touch();
                l.dendrites.as_mut()
            })
            .collect()
    }
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn batch_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(Real, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} labels for {} rows", labels.len(), logits.rows()),
        ));
    }
    let b = labels.len().max(1) as Real;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (s, &y) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(s), y)?;
        loss += l;
        for (o, v) in grad.row_mut(s).iter_mut().zip(g) {
            *o = v / b;
        }
    }
    Ok((loss / b, grad))
}
