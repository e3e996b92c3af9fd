//! Continual-learning engine built around Dale's-principle layers, active
//! dendrites, k-WTA sparsity, heterogeneous dropout, Hebbian updates,
//! Synaptic Intelligence and reservoir replay.

pub mod cli;
pub mod consolidation;
pub mod context;
pub mod data;
pub mod error;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod plasticity;
pub mod replay;
pub mod trainer;

pub use error::{Error, Result};
