//! Named configurations for every setting and ablation row of the reference
//! results: `table1-<setting>-<variant>`, e.g. `table1-perm5-bioann`.

use super::config::ExperimentConfig;
use crate::data::Scenario;
use crate::model::{ActivationKind, Mechanisms, ModelMode};
use crate::numerics::Real;

/// Hyperparameters selected for one benchmark setting.
struct Setting {
    scenario: Scenario,
    n_tasks: usize,
    eta_wie: Real,
    eta_wei: Real,
    /// Hebbian rate for the Hebbian-only row.
    eta_h: Real,
    /// SI weight for the SC-only row.
    lambda: Real,
    /// Consistency weight for the ER+CR row.
    beta_cr: Real,
    /// Best heterogeneous-dropout strength for the HD-only row.
    rho_hd: Real,
    bio_eta_h: Real,
    bio_lambda: Real,
    bio_rho: Real,
    bio_beta: Real,
}

const SETTINGS: [Setting; 7] = [
    Setting { scenario: Scenario::Rot, n_tasks: 5, eta_wie: 3e-2, eta_wei: 3e-3, eta_h: 3e-10, lambda: 0.25, beta_cr: 0.5, rho_hd: 1.0, bio_eta_h: 3e-8, bio_lambda: 0.25, bio_rho: 0.1, bio_beta: 0.5 },
    Setting { scenario: Scenario::Rot, n_tasks: 10, eta_wie: 3e-2, eta_wei: 3e-3, eta_h: 3e-8, lambda: 0.25, beta_cr: 0.5, rho_hd: 1.0, bio_eta_h: 3e-8, bio_lambda: 0.1, bio_rho: 0.3, bio_beta: 0.5 },
    Setting { scenario: Scenario::Rot, n_tasks: 20, eta_wie: 3e-3, eta_wei: 3e-4, eta_h: 3e-10, lambda: 1.0, beta_cr: 0.5, rho_hd: 1.0, bio_eta_h: 3e-8, bio_lambda: 0.1, bio_rho: 0.3, bio_beta: 0.5 },
    Setting { scenario: Scenario::Perm, n_tasks: 5, eta_wie: 3e-2, eta_wei: 3e-2, eta_h: 3e-9, lambda: 0.1, beta_cr: 0.5, rho_hd: 0.7, bio_eta_h: 3e-6, bio_lambda: 0.1, bio_rho: 0.1, bio_beta: 0.5 },
    Setting { scenario: Scenario::Perm, n_tasks: 10, eta_wie: 3e-2, eta_wei: 3e-2, eta_h: 3e-6, lambda: 0.25, beta_cr: 0.5, rho_hd: 1.0, bio_eta_h: 3e-8, bio_lambda: 0.1, bio_rho: 0.3, bio_beta: 0.5 },
    Setting { scenario: Scenario::Perm, n_tasks: 20, eta_wie: 3e-2, eta_wei: 3e-3, eta_h: 3e-9, lambda: 0.1, beta_cr: 0.5, rho_hd: 0.3, bio_eta_h: 3e-8, bio_lambda: 0.1, bio_rho: 0.3, bio_beta: 0.5 },
    Setting { scenario: Scenario::Seq, n_tasks: 5, eta_wie: 3e-2, eta_wei: 3e-3, eta_h: 3e-7, lambda: 0.25, beta_cr: 0.25, rho_hd: 1.0, bio_eta_h: 3e-6, bio_lambda: 0.1, bio_rho: 0.1, bio_beta: 0.25 },
];

/// Variants in table order.
pub const VARIANTS: [&str; 11] = [
    "joint",
    "sgd",
    "active-dendrites",
    "dale",
    "hebbian",
    "hd",
    "sc",
    "er",
    "er-cr",
    "bioann",
    "standard-bioann",
];

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub config: ExperimentConfig,
}

fn setting_name(s: &Setting) -> String {
    format!("{}{}", s.scenario, s.n_tasks)
}

fn build(s: &Setting, variant: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        scenario: s.scenario,
        n_tasks: s.n_tasks,
        run_id: Some(format!("table1-{}-{variant}", setting_name(s))),
        ..ExperimentConfig::default()
    };
    // Every variant except the plain baselines starts from Active Dendrites
    // with k-WTA; Dale rows add the inhibitory learning rates.
    c.model.mode = ModelMode::Bio;
    c.model.activation = ActivationKind::Kwta;
    c.optimizer.eta_wie = s.eta_wie;
    c.optimizer.eta_wei = s.eta_wei;
    c.dropout.rho = vec![0.0, 0.0];
    c.si.lambda = s.lambda;
    c.replay.alpha = 1.0;
    c.replay.beta = 0.0;
    let mut m = Mechanisms::none();
    m.dendrites = true;
    m.dale = true;
    match variant {
        "joint" | "sgd" => {
            c.model.mode = ModelMode::Standard;
            c.model.activation = ActivationKind::Relu;
            m = Mechanisms::none();
            c.training.joint = variant == "joint";
        }
        "active-dendrites" => m.dale = false,
        "dale" => {}
        "hebbian" => {
            m.hebbian = true;
            c.optimizer.eta_h = s.eta_h;
        }
        "hd" => {
            m.dropout = true;
            c.dropout.rho = vec![s.rho_hd; 2];
        }
        "sc" => m.si = true,
        "er" => m.er = true,
        "er-cr" => {
            m.er = true;
            m.cr = true;
            c.replay.beta = s.beta_cr;
        }
        "bioann" | "standard-bioann" => {
            m = Mechanisms::all();
            c.optimizer.eta_h = s.bio_eta_h;
            c.si.lambda = s.bio_lambda;
            c.dropout.rho = vec![s.bio_rho; 2];
            c.replay.beta = s.bio_beta;
            if variant == "standard-bioann" {
                c.model.mode = ModelMode::Standard;
                m.dale = false;
                m.dendrites = false;
                m.hebbian = false;
            }
        }
        other => unreachable!("unknown variant {other}"),
    }
    c.mechanisms = m;
    c
}

fn describe(s: &Setting, variant: &str) -> String {
    let what = match variant {
        "joint" => "standard ReLU MLP trained on all tasks at once",
        "sgd" => "standard ReLU MLP trained sequentially",
        "active-dendrites" => "point neurons with active dendrites and k-WTA",
        "dale" => "active dendrites on Dale's-principle layers",
        "hebbian" => "active dendrites + Dale + Hebbian update",
        "hd" => "active dendrites + Dale + heterogeneous dropout",
        "sc" => "active dendrites + Dale + synaptic consolidation",
        "er" => "active dendrites + Dale + experience replay",
        "er-cr" => "active dendrites + Dale + replay with consistency regularisation",
        "bioann" => "all mechanisms combined",
        _ => "k-WTA standard MLP with dropout, consolidation and replay",
    };
    let name = match s.scenario {
        Scenario::Rot => "Rot-MNIST",
        Scenario::Perm => "Perm-MNIST",
        Scenario::Seq => "Seq-MNIST",
    };
    format!("{name}, {} tasks: {what}", s.n_tasks)
}

/// Every built-in preset.
pub fn presets() -> Vec<Preset> {
    SETTINGS
        .iter()
        .flat_map(|s| {
            VARIANTS.iter().map(move |v| Preset {
                name: format!("table1-{}-{v}", setting_name(s)),
                description: describe(s, v),
                config: build(s, v),
            })
        })
        .collect()
}

pub fn find_preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}
