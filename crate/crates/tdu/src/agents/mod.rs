//! Bootstrapped ensemble Q-learning with TD-uncertainty exploration.
//!
//! An agent maintains `K` exploiter heads trained on the extrinsic reward and
//! `N` explorer heads trained on reward augmented by the sample standard
//! deviation of the exploiters' TD-errors. Every head is an online/target
//! network pair plus a fixed random prior network that is composed with both
//! the online and the target net. Ablation variants swap
//! the intrinsic signal (Q-value spread, absolute TD-error, count bonus) or
//! the head-selection rule (UCB1 bandit).

mod agent;
mod bandit;
mod checkpoint;
mod ensemble;
mod loss;

pub use agent::{Agent, CountTable, Variant};
pub use bandit::BanditState;
pub use checkpoint::{load_ensemble, save_ensemble};
pub use ensemble::{
    act, argmax_tie_low, cts_bonus, one_hot_index, q_target, q_value, qex_reward, qu_sigma,
    select_head, td_error, tdu_sigma, EnsembleState, Head,
};
pub use loss::{compute_sigmas, tdu_loss, EvalCache, IntrinsicMode, LossOutput};

use crate::error::{Error, Result};
use serde::Deserialize;

/// Hyper-parameters of the ensemble agent.
///
/// Defaults follow the bsuite tabular-benchmark settings: discount 0.99,
/// batch 32, ensemble 20 split 10/10, learning rate 0.001, full bootstrap
/// masks, replay capacity 10000, target sync every 4 optimizer steps,
/// `beta = 1`, prior scale 3.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TduConfig {
    /// Number of exploiter heads, `K`.
    pub exploiters: usize,
    /// Number of explorer heads, `N`.
    pub explorers: usize,
    /// Intrinsic reward scale `beta >= 0`.
    pub beta: f64,
    /// Prior scale `lambda >= 0`.
    pub prior_scale: f64,
    /// Discount factor in (0, 1].
    pub discount: f64,
    /// Bootstrap mask probability.
    pub mask_prob: f64,
    /// Per-head reward noise scale.
    pub noise_scale: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Environment steps between SGD updates.
    pub steps_per_sgd: u64,
    /// Optimizer steps (per head) between target-network syncs.
    pub target_update_period: u64,
    /// Minimum buffer fill before learning starts.
    pub min_replay_size: usize,
    pub replay_capacity: usize,
    /// Hidden layer widths of every Q-network.
    pub hidden: Vec<usize>,
    /// Evaluate the online argmax through the target network (double DQN).
    pub double_dqn: bool,
    /// Optional epsilon-greedy on top of head sampling; 0 = pure greedy.
    pub epsilon: f64,
    /// UCB1 exploration coefficient for the bandit head-selection variant.
    pub bandit_eta: f64,
}

impl Default for TduConfig {
    fn default() -> Self {
        TduConfig {
            exploiters: 10,
            explorers: 10,
            beta: 1.0,
            prior_scale: 3.0,
            discount: 0.99,
            mask_prob: 1.0,
            noise_scale: 0.0,
            batch_size: 32,
            learning_rate: 0.001,
            steps_per_sgd: 1,
            target_update_period: 4,
            min_replay_size: 16,
            replay_capacity: 10_000,
            hidden: vec![64, 64],
            double_dqn: true,
            epsilon: 0.0,
            bandit_eta: 1.0,
        }
    }
}

impl TduConfig {
    /// Total number of heads, `K + N`.
    pub fn ensemble_total(&self) -> usize {
        self.exploiters + self.explorers
    }

    /// Validate ranges. `min_exploiters` is 2 whenever an ensemble spread is
    /// taken (TDU, QU) and 1 for the single-primary-network variants.
    pub fn validate(&self, min_exploiters: usize) -> Result<()> {
        if self.exploiters < min_exploiters {
            return Err(Error::invalid(format!(
                "need at least {min_exploiters} exploiter heads, got {}",
                self.exploiters
            )));
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::invalid("beta must be finite and >= 0"));
        }
        if self.prior_scale < 0.0 || !self.prior_scale.is_finite() {
            return Err(Error::invalid("prior scale must be finite and >= 0"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::invalid("discount must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(Error::invalid("mask probability must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid("epsilon must be in [0, 1]"));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return Err(Error::invalid(
                "batch size and replay capacity must be positive",
            ));
        }
        if self.steps_per_sgd == 0 || self.target_update_period == 0 {
            return Err(Error::invalid("update periods must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}
