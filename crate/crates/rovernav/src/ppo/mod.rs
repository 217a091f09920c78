//! PPO training: rollout collection over vectorized worlds, generalized
//! advantage estimation, the clipped surrogate objective, and the update
//! loop.

mod gae;
mod loss;
mod obs;
mod rollout;
mod train;

pub use gae::compute_gae;
pub use loss::{ppo_loss, LossStats, MinibatchSample};
pub use obs::{ObsMode, ObsPipeline};
pub use rollout::{collect_rollout, EnvRunner, EpisodeEvent, RolloutBuffer, Transition};
pub use train::{train, EpisodeRecord, TrainError, TrainLog, TrainOptions, TrainResult, UpdateRow};

use thiserror::Error;

use crate::nn::NnError;
use crate::preprocess::PreprocessError;
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid ppo config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Net(#[from] NnError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("sequence length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite {what} during update {update}")]
    NonFinite { what: &'static str, update: usize },
    #[error("observation pipeline ({pipeline}) does not match network ({net})")]
    ObsNetMismatch { pipeline: String, net: String },
}

/// Tuned PPO hyperparameters. The defaults are the tuned training values
/// with one exception: `total_timesteps` defaults to the desk-scale
/// 200k; [`PpoConfig::paper_scale`] restores the full 5e6 budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub total_timesteps: u64,
    pub learning_rate: f64,
    pub gamma: f64,
    pub ent_coef: f64,
    pub n_epochs: usize,
    pub clip_range: f64,
    pub n_steps: usize,
    pub gae_lambda: f64,
    pub vf_coef: f64,
    pub n_minibatches: usize,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub n_envs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            total_timesteps: 200_000,
            learning_rate: 0.0003,
            gamma: 0.85,
            ent_coef: 0.01,
            n_epochs: 4,
            clip_range: 0.2,
            n_steps: 64,
            gae_lambda: 0.95,
            vf_coef: 0.5,
            n_minibatches: 1,
            max_grad_norm: 0.5,
            seed: 0,
            n_envs: 4,
        }
    }
}

impl PpoConfig {
    /// The full-scale timestep budget.
    pub fn paper_scale() -> Self {
        Self {
            total_timesteps: 5_000_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(PpoError::InvalidConfig(format!("gamma {} out of (0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(PpoError::InvalidConfig(format!("gae_lambda {} out of [0, 1]", self.gae_lambda)));
        }
        if self.clip_range <= 0.0 {
            return Err(PpoError::InvalidConfig("clip_range must be positive".into()));
        }
        if self.n_steps == 0 || self.n_envs == 0 || self.n_epochs == 0 || self.n_minibatches == 0 {
            return Err(PpoError::InvalidConfig(
                "n_steps, n_envs, n_epochs, n_minibatches must all be >= 1".into(),
            ));
        }
        if self.n_steps % self.n_minibatches != 0 {
            return Err(PpoError::InvalidConfig(format!(
                "n_steps {} not divisible by n_minibatches {}",
                self.n_steps, self.n_minibatches
            )));
        }
        if self.learning_rate <= 0.0 || self.max_grad_norm <= 0.0 {
            return Err(PpoError::InvalidConfig("learning_rate and max_grad_norm must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_tuned_parameters() {
        let c = PpoConfig::default();
        assert_eq!(c.learning_rate, 0.0003);
        assert_eq!(c.gamma, 0.85);
        assert_eq!(c.ent_coef, 0.01);
        assert_eq!(c.n_epochs, 4);
        assert_eq!(c.clip_range, 0.2);
        assert_eq!(c.n_steps, 64);
        assert_eq!(c.gae_lambda, 0.95);
        assert_eq!(c.vf_coef, 0.5);
        assert_eq!(c.n_minibatches, 1);
        assert_eq!(c.max_grad_norm, 0.5);
        assert_eq!(PpoConfig::paper_scale().total_timesteps, 5_000_000);
        assert_eq!(c.total_timesteps, 200_000);
        c.validate().unwrap();
    }

    #[test]
    fn validation_rejects_indivisible_minibatches() {
        let c = PpoConfig {
            n_minibatches: 3,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
