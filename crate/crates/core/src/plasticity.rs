//! Parameter updates: gradient corrections, clipping, projected SGD and the
//! Oja-rule Hebbian step on dendritic segments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::DendriteBank;
use crate::model::{Gradients, ParamKind, ParamMut, ParamSpec};
use crate::numerics::{dot, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Rescale all gradients when their global L2 norm exceeds the limit.
    Norm,
    /// Clamp every component into `[0, 1]`.
    LiteralElementwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub eta: Real,
    /// Learning rate of `W_ie` from the second task on.
    pub eta_wie: Real,
    /// Learning rate of `W_ei` from the second task on.
    pub eta_wei: Real,
    pub eta_h: Real,
    pub clip_mode: ClipMode,
    pub clip_value: Real,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 0.3,
            eta_wie: 3e-2,
            eta_wei: 3e-3,
            eta_h: 3e-8,
            clip_mode: ClipMode::Norm,
            clip_value: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta", self.eta),
            ("eta_wie", self.eta_wie),
            ("eta_wei", self.eta_wei),
            ("eta_h", self.eta_h),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(self.clip_value > 0.0) {
            return Err(Error::Config(format!("clip_value must be > 0, got {}", self.clip_value)));
        }
        Ok(())
    }

    /// Learning rate of a group while training task `task_index` (0-based).
    pub fn lr_for(&self, kind: ParamKind, task_index: usize) -> Real {
        match kind {
            ParamKind::Wie if task_index >= 1 => self.eta_wie,
            ParamKind::Wei if task_index >= 1 => self.eta_wei,
            _ => self.eta,
        }
    }
}

/// Factors applied to the `W_ie` and `W_ei` gradients of a Dale layer with
/// `n_e` excitatory units and input dimension `d`: `(1/√n_e, 1/d)`.
pub fn inhibitory_scales(n_e: usize, d: usize) -> (Real, Real) {
    (1.0 / (n_e as Real).sqrt(), 1.0 / d as Real)
}

/// Scales every `W_ie` gradient by `1/√n_e` and every `W_ei` gradient by
/// `1/d` of its layer.
pub fn scale_inhibitory_grads(specs: &[ParamSpec], grads: &mut Gradients) {
    for (spec, g) in specs.iter().zip(grads.groups.iter_mut()) {
        let (s_ie, s_ei) = inhibitory_scales(spec.n_e, spec.fan_in);
        let s = match spec.kind {
            ParamKind::Wie => s_ie,
            ParamKind::Wei => s_ei,
            _ => continue,
        };
        g.iter_mut().for_each(|v| *v *= s);
    }
}

pub fn clip_gradients(grads: &mut Gradients, mode: ClipMode, clip_value: Real) {
    match mode {
        ClipMode::Norm => {
            let norm = grads.norm();
            if norm > clip_value {
                grads.scale(clip_value / norm);
            }
        }
        ClipMode::LiteralElementwise => grads
            .groups
            .iter_mut()
            .flat_map(|g| g.iter_mut())
            .for_each(|v| *v = v.clamp(0.0, 1.0)),
    }
}

/// `θ ← θ − lr·g` per group, then clamps Dale groups at zero and re-applies
/// connection masks.
pub fn sgd_step(
    params: &mut [ParamMut<'_>],
    grads: &Gradients,
    cfg: &OptimizerConfig,
    task_index: usize,
) -> Result<()> {
    if params.len() != grads.groups.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} parameter groups, {} gradient groups", params.len(), grads.groups.len()),
        ));
    }
    for (p, g) in params.iter_mut().zip(&grads.groups) {
        if p.values.len() != g.len() {
            return Err(Error::shape(
                "sgd_step",
                format!("group of {} with gradient of {}", p.values.len(), g.len()),
            ));
        }
        let lr = cfg.lr_for(p.spec.kind, task_index);
        for (v, gv) in p.values.iter_mut().zip(g) {
            *v -= lr * gv;
        }
        if p.spec.kind.sign_constrained() {
            p.values.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        if let Some(mask) = p.mask {
            for (v, m) in p.values.iter_mut().zip(mask) {
                *v *= m;
            }
        }
    }
    Ok(())
}

/// Oja update of the winning segment of every unit, once per context:
/// `u_κ ← u_κ + η_h·d·(c − d·u_κ)` with `d = u_κ·c`.
pub fn hebbian_step(bank: &mut DendriteBank, contexts: &[&[Real]], eta_h: Real) -> Result<()> {
    for c in contexts {
        let sel = bank.select(c)?;
        for (unit, (&seg, &d)) in sel.segments.iter().zip(&sel.responses).enumerate() {
            if d == 0.0 {
                continue;
            }
            let u = bank.segment_mut(unit, seg);
            for (w, &cv) in u.iter_mut().zip(c.iter()) {
                *w += eta_h * d * (cv - d * *w);
            }
        }
    }
    Ok(())
}

/// Modulating signal `|u_κ·c|` averaged over units; diagnostic for the
/// Hebbian step.
pub fn mean_modulation(bank: &DendriteBank, context: &[Real]) -> Result<Real> {
    let sel = bank.select(context)?;
    Ok(sel.responses.iter().map(|r| r.abs()).sum::<Real>() / sel.responses.len().max(1) as Real)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[Real], b: &[Real]) -> Real {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
