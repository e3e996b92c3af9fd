//! Synaptic Intelligence with upscaled importance for inhibitory weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, ParamKind, ParamSpec};
use crate::numerics::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiConfig {
    pub lambda: Real,
    pub lambda_wie: Real,
    pub lambda_wei: Real,
    /// Damping in the importance denominator.
    pub gamma: Real,
}

impl Default for SiConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            lambda_wie: 10.0,
            lambda_wei: 10.0,
            gamma: 0.1,
        }
    }
}

impl SiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.lambda_wie < 0.0 || self.lambda_wei < 0.0 {
            return Err(Error::Config("SI weights must be >= 0".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiState {
    pub cfg: SiConfig,
    kinds: Vec<ParamKind>,
    /// Path-integral accumulator for the current task.
    pub omega: Vec<Vec<Real>>,
    /// Consolidated importance.
    pub big_omega: Vec<Vec<Real>>,
    /// Importance used by the penalty (inhibitory groups upscaled).
    pub omega_adj: Vec<Vec<Real>>,
    /// Reference weights from the last task boundary.
    pub theta_ref: Vec<Vec<Real>>,
    pub consolidations: usize,
}

impl SiState {
    /// Fresh state with reference weights `theta`.
    pub fn new(cfg: SiConfig, specs: &[ParamSpec], theta: Vec<Vec<Real>>) -> Result<Self> {
        check_aligned("SiState::new", specs, &theta)?;
        let zeros: Vec<Vec<Real>> = specs.iter().map(|s| vec![0.0; s.len]).collect();
        Ok(Self {
            cfg,
            kinds: specs.iter().map(|s| s.kind).collect(),
            omega: zeros.clone(),
            big_omega: zeros.clone(),
            omega_adj: zeros,
            theta_ref: theta,
            consolidations: 0,
        })
    }

    /// `ω += lr·g²` with the learning rate each group was actually updated with.
    pub fn accumulate_omega(&mut self, grads: &Gradients, lrs: &[Real]) -> Result<()> {
        if grads.groups.len() != self.omega.len() || lrs.len() != self.omega.len() {
            return Err(Error::shape("accumulate_omega", "group count mismatch"));
        }
        for ((w, g), &lr) in self.omega.iter_mut().zip(&grads.groups).zip(lrs) {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi += lr * gi * gi;
            }
        }
        Ok(())
    }

    /// Task boundary: `Ω += ω / ((θ − θ_c)² + γ)`, `ω ← 0`, `θ_c ← θ`, then
    /// refresh the scaled importance.
    pub fn consolidate_task(&mut self, theta: &[&[Real]]) -> Result<()> {
        if theta.len() != self.omega.len() {
            return Err(Error::shape("consolidate_task", "group count mismatch"));
        }
        let gamma = self.cfg.gamma;
        for g in 0..theta.len() {
            let big = &mut self.big_omega[g];
            let reference = &mut self.theta_ref[g];
            for (i, &t) in theta[g].iter().enumerate() {
                let delta = t - reference[i];
                big[i] += self.omega[g][i] / (delta * delta + gamma);
                reference[i] = t;
            }
            self.omega[g].iter_mut().for_each(|w| *w = 0.0);
        }
        self.refresh_adjusted();
        self.consolidations += 1;
        Ok(())
    }

    fn refresh_adjusted(&mut self) {
        for ((adj, big), kind) in self.omega_adj.iter_mut().zip(&self.big_omega).zip(&self.kinds) {
            let s = match kind {
                ParamKind::Wie => self.cfg.lambda_wie,
                ParamKind::Wei => self.cfg.lambda_wei,
                _ => 1.0,
            };
            for (a, b) in adj.iter_mut().zip(big) {
                *a = s * b;
            }
        }
    }

    /// `λ·Σ Ω_adj·(θ − θ_c)²`; adds `2λ·Ω_adj·(θ − θ_c)` into `grads`.
    pub fn penalty(&self, theta: &[&[Real]], grads: Option<&mut Gradients>) -> Result<Real> {
        if theta.len() != self.omega_adj.len() {
            return Err(Error::shape("si_penalty", "group count mismatch"));
        }
        if self.consolidations == 0 {
            return Ok(0.0);
        }
        let lambda = self.cfg.lambda;
        let mut loss = 0.0;
        let mut grads = grads;
        for g in 0..theta.len() {
            let adj = &self.omega_adj[g];
            let reference = &self.theta_ref[g];
            for (i, &t) in theta[g].iter().enumerate() {
                let d = t - reference[i];
                loss += adj[i] * d * d;
            }
            if let Some(gr) = grads.as_deref_mut() {
                for (i, (o, &t)) in gr.groups[g].iter_mut().zip(theta[g]).enumerate() {
                    *o += 2.0 * lambda * adj[i] * (t - reference[i]);
                }
            }
        }
        Ok(lambda * loss)
    }
}

/// Free-function form of [`SiState::penalty`].
pub fn si_penalty(state: &SiState, theta: &[&[Real]], grads: Option<&mut Gradients>) -> Result<Real> {
    state.penalty(theta, grads)
}

fn check_aligned(op: &'static str, specs: &[ParamSpec], theta: &[Vec<Real>]) -> Result<()> {
    if specs.len() != theta.len() || specs.iter().zip(theta).any(|(s, t)| s.len != t.len()) {
        return Err(Error::shape(op, "parameters do not match their specs"));
    }
    Ok(())
}
