//! Policy hyperparameters and the final presets for both games.

use envs::EnvKind;
use neurocore::Activation;
use serde::{Deserialize, Serialize};

/// Which hyperparameter family to instantiate agents with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperPreset {
    /// The final architecture table, learning rates included.
    Table,
    /// Same architecture, desk-scale optimisation settings.
    #[default]
    Stable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoSpec {
    pub layers: Vec<usize>,
    pub activation: Activation,
    pub gamma: f64,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    /// Finished episodes collected before each update.
    pub episodes_per_update: usize,
    /// Standardise advantages within each update batch.
    pub normalize_advantages: bool,
    /// Global gradient-norm cap applied before each Adam step.
    pub max_grad_norm: Option<f64>,
}

impl PpoSpec {
    pub fn preset(env: EnvKind) -> Self {
        match env {
            EnvKind::Duel => Self {
                layers: vec![16, 32],
                gamma: 0.97,
                lr: 0.1,
                entropy_coef: 0.01,
                ..Self::base()
            },
            EnvKind::Card => Self {
                layers: vec![32, 256],
                gamma: 0.99,
                lr: 0.05,
                entropy_coef: 0.008,
                ..Self::base()
            },
        }
    }

    /// Table values with the optimisation settings replaced by ones that
    /// train reliably at desk scale. The table learning rates drive the
    /// actor into a deterministic policy within a few updates.
    pub fn stable(env: EnvKind) -> Self {
        let table = Self::preset(env);
        match env {
            EnvKind::Duel => Self {
                lr: 0.001,
                gamma: 0.5,
                epochs: 50,
                episodes_per_update: 32,
                ..table
            },
            EnvKind::Card => Self {
                lr: 0.001,
                epochs: 10,
                episodes_per_update: 4,
                ..table
            },
        }
    }

    pub fn for_preset(env: EnvKind, preset: HyperPreset) -> Self {
        match preset {
            HyperPreset::Table => Self::preset(env),
            HyperPreset::Stable => Self::stable(env),
        }
    }

    fn base() -> Self {
        Self {
            layers: vec![],
            activation: Activation::Tanh,
            gamma: 0.99,
            lr: 0.01,
            entropy_coef: 0.01,
            value_coef: 0.5,
            clip_eps: 0.2,
            epochs: 4,
            episodes_per_update: 1,
            normalize_advantages: false,
            max_grad_norm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqlSpec {
    pub layers: Vec<usize>,
    pub activation: Activation,
    pub gamma: f64,
    pub lr: f64,
    pub double_q: bool,
    pub target_update: u64,
    pub prioritized: bool,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    /// Updates over which the importance exponent anneals to 1.
    pub per_beta_steps: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Decisions over which exploration decays linearly.
    pub epsilon_steps: u64,
    pub max_grad_norm: Option<f64>,
}

impl DqlSpec {
    pub fn preset(env: EnvKind) -> Self {
        match env {
            EnvKind::Duel => Self {
                layers: vec![16, 256],
                gamma: 0.95,
                lr: 0.03,
                ..Self::base()
            },
            EnvKind::Card => Self {
                layers: vec![32, 256],
                gamma: 0.98,
                lr: 0.004,
                ..Self::base()
            },
        }
    }

    fn base() -> Self {
        Self {
            layers: vec![],
            activation: Activation::Tanh,
            gamma: 0.95,
            lr: 0.001,
            double_q: true,
            target_update: 500,
            prioritized: true,
            buffer_capacity: 5000,
            batch_size: 32,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_beta_steps: 10_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_steps: 5_000,
            max_grad_norm: Some(10.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_follow_the_final_architecture_table() {
        let p = PpoSpec::preset(EnvKind::Duel);
        assert_eq!(
            (
                p.layers.clone(),
                p.gamma,
                p.lr,
                p.entropy_coef,
                p.value_coef
            ),
            (vec![16, 32], 0.97, 0.1, 0.01, 0.5)
        );
        let p = PpoSpec::preset(EnvKind::Card);
        assert_eq!(
            (
                p.layers.clone(),
                p.gamma,
                p.lr,
                p.entropy_coef,
                p.value_coef
            ),
            (vec![32, 256], 0.99, 0.05, 0.008, 0.5)
        );
        let d = DqlSpec::preset(EnvKind::Duel);
        assert_eq!(
            (d.layers.clone(), d.gamma, d.lr, d.target_update),
            (vec![16, 256], 0.95, 0.03, 500)
        );
        assert!(d.double_q && d.prioritized);
        let d = DqlSpec::preset(EnvKind::Card);
        assert_eq!(
            (d.layers.clone(), d.gamma, d.lr, d.target_update),
            (vec![32, 256], 0.98, 0.004, 500)
        );
    }
}
