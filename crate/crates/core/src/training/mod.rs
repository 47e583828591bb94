//! PPO with a centralized critic, one shared actor and team resampling.

mod buffer;
mod log;
mod ppo;
mod teams;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::envs::EnvKind;
use crate::error::{Error, Result};

pub use buffer::{compute_advantages, n_step_returns, Advantages, RolloutBuffer, Transition};
pub use log::{EpisodeRecord, TrainLog, UpdateRecord, EPISODES_CSV_HEADER, TRAIN_CSV_HEADER};
pub use ppo::{clipped_objective, policy_loss, value_loss, PolicyLoss};
pub use teams::{make_training_teams, training_pool};
pub use trainer::{train, TrainOutcome, Trainer, UpdateStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub clip: f64,
    pub n_step: usize,
    pub buffer_length: usize,
    /// Env steps between refreshes of the frozen critic used for bootstrapping.
    pub critic_refresh_interval: u64,
    /// Defaults to 40M for HMT and 20M for HSN when absent.
    pub total_env_steps: Option<u64>,
    pub resample_every_episodes: usize,
    pub normalize_advantages: bool,
    /// Standardize rewards with a running mean and standard deviation
    /// before computing returns.
    pub standardize_rewards: bool,
    pub gamma: f64,
    /// Global L2 bound on each network's gradient before the Adam step; 0 disables.
    pub max_grad_norm: f64,
    /// Env steps between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
    /// Episodes in the rolling mean reported as `mean_return`.
    pub return_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.0005,
            entropy_coef: 0.01,
            epochs: 4,
            clip: 0.2,
            n_step: 5,
            buffer_length: 64,
            critic_refresh_interval: 200,
            total_env_steps: None,
            resample_every_episodes: 10,
            normalize_advantages: false,
            standardize_rewards: true,
            gamma: 0.99,
            max_grad_norm: 10.0,
            checkpoint_interval: 0,
            return_window: 100,
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self, kind: EnvKind) -> u64 {
        self.total_env_steps.unwrap_or(match kind {
            EnvKind::Hmt => 40_000_000,
            EnvKind::Hsn => 20_000_000,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("train.{key}"), "must be positive"))
            }
        };
        positive("lr", self.lr > 0.0 && self.lr.is_finite())?;
        positive("epochs", self.epochs > 0)?;
        positive("n_step", self.n_step > 0)?;
        positive("buffer_length", self.buffer_length > 0)?;
        positive("critic_refresh_interval", self.critic_refresh_interval > 0)?;
        positive("resample_every_episodes", self.resample_every_episodes > 0)?;
        positive("return_window", self.return_window > 0)?;
        if let Some(t) = self.total_env_steps {
            positive("total_env_steps", t > 0)?;
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::config("train.clip", "must lie in (0, 1)"));
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return Err(Error::config("train.entropy_coef", "must be non-negative"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("train.gamma", "must lie in (0, 1]"));
        }
        if !(self.max_grad_norm >= 0.0 && self.max_grad_norm.is_finite()) {
            return Err(Error::config("train.max_grad_norm", "must be non-negative"));
        }
        Ok(())
    }
}
