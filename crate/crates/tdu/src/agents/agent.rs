//! The full agent: acting, replay feeding, and the SGD/target schedule.

use std::fmt;
use std::str::FromStr;

use crate::agents::bandit::BanditState;
use crate::agents::ensemble::{
    act as greedy_act, argmax_tie_low, cts_bonus, one_hot_index, q_value, qu_sigma, select_head,
    EnsembleState,
};
use crate::agents::loss::{tdu_loss, EvalCache, IntrinsicMode};
use crate::agents::TduConfig;
use crate::error::{Error, Result};
use crate::nn::RngStream;
use crate::replay::{ReplayBuffer, Transition};

/// Algorithm variant. `Tdu` is the full method; the others are the ablations
/// and baselines it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// TD-uncertainty intrinsic reward (the full method).
    Tdu,
    /// Bootstrapped DQN with priors: TDU with beta forced to 0.
    Bdqn,
    /// Intrinsic reward from the spread of Q-values instead of TD-errors.
    Qu,
    /// No intrinsic training signal; the Q-value spread is an acting bonus.
    QUcb,
    /// Two-network baseline: explorer rewarded by |TD-error| of the primary.
    Qex,
    /// Count-based bonus added to the stored reward for all heads.
    Cts,
    /// TDU with UCB1 bandit head selection instead of uniform sampling.
    TduBandit,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Tdu,
        Variant::Bdqn,
        Variant::Qu,
        Variant::QUcb,
        Variant::Qex,
        Variant::Cts,
        Variant::TduBandit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Tdu => "tdu",
            Variant::Bdqn => "bdqn",
            Variant::Qu => "qu",
            Variant::QUcb => "q_ucb",
            Variant::Qex => "qex",
            Variant::Cts => "cts",
            Variant::TduBandit => "tdu_bandit",
        }
    }

    /// How the loss derives its intrinsic signal for this variant.
    pub fn intrinsic_mode(self) -> IntrinsicMode {
        match self {
            Variant::Tdu | Variant::Bdqn | Variant::TduBandit => IntrinsicMode::TdStd,
            Variant::Qu => IntrinsicMode::QStd,
            Variant::Qex => IntrinsicMode::AbsTd,
            Variant::QUcb | Variant::Cts => IntrinsicMode::Extrinsic,
        }
    }

    /// Minimum exploiter count the variant is well-defined for.
    fn min_exploiters(self) -> usize {
        match self {
            Variant::Tdu | Variant::TduBandit | Variant::Qu | Variant::QUcb => 2,
            Variant::Bdqn | Variant::Qex | Variant::Cts => 1,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant '{s}'")))
    }
}

/// Exact per-(state, action) visit counts for one-hot observations.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    counts: Vec<f64>,
    num_actions: usize,
}

impl CountTable {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        CountTable {
            counts: vec![0.0; num_states * num_actions],
            num_actions,
        }
    }

    pub fn count(&self, state: usize, action: usize) -> f64 {
        self.counts[state * self.num_actions + action]
    }

    pub fn record(&mut self, state: usize, action: usize) {
        self.counts[state * self.num_actions + action] += 1.0;
    }
}

/// One learning agent confined to one run.
///
/// Every random decision is drawn from a named substream of the run seed:
/// `"agent-init"` (parameters), `"agent-heads"` (episode head choice),
/// `"agent-masks"` (per step: `K+N` mask Bernoullis, then `K+N` noise
/// normals, in head order), `"agent-replay"` (batch sampling) and
/// `"agent-explore"` (epsilon-greedy, consumed only if epsilon > 0).
#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: TduConfig,
    pub variant: Variant,
    pub ensemble: EnsembleState,
    pub replay: ReplayBuffer,
    counts: Option<CountTable>,
    bandit: Option<BanditState>,
    cache: EvalCache,
    rng_masks: RngStream,
    rng_replay: RngStream,
    rng_heads: RngStream,
    rng_explore: RngStream,
    total_steps: u64,
}

impl Agent {
    pub fn new(
        cfg: TduConfig,
        variant: Variant,
        obs_dim: usize,
        num_actions: usize,
        run_rng: &RngStream,
    ) -> Result<Self> {
        let mut cfg = cfg;
        if variant == Variant::Bdqn {
            cfg.beta = 0.0;
        }
        cfg.validate(variant.min_exploiters())?;
        let ensemble =
            EnsembleState::init(&cfg, obs_dim, num_actions, &run_rng.derive("agent-init"))?;
        let counts = (variant == Variant::Cts).then(|| CountTable::new(obs_dim, num_actions));
        let bandit = (variant == Variant::TduBandit)
            .then(|| BanditState::new(cfg.ensemble_total(), cfg.bandit_eta));
        Ok(Agent {
            cache: EvalCache::new(cfg.ensemble_total()),
            replay: ReplayBuffer::new(cfg.replay_capacity),
            counts,
            bandit,
            ensemble,
            rng_masks: run_rng.derive("agent-masks"),
            rng_replay: run_rng.derive("agent-replay"),
            rng_heads: run_rng.derive("agent-heads"),
            rng_explore: run_rng.derive("agent-explore"),
            cfg,
            variant,
            total_steps: 0,
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn active_head(&self) -> usize {
        self.ensemble.active_head
    }

    /// Resample the acting head for a new episode.
    pub fn begin_episode(&mut self) {
        self.ensemble.active_head = match &self.bandit {
            Some(b) => b.select(),
            None => select_head(&self.ensemble, &mut self.rng_heads),
        };
    }

    /// Choose an action for `obs` under the active head.
    pub fn act(&mut self, obs: &[f64]) -> Result<usize> {
        if self.cfg.epsilon > 0.0 && self.rng_explore.bernoulli(self.cfg.epsilon) {
            return Ok(self.rng_explore.index(self.ensemble.num_actions));
        }
        if self.variant == Variant::QUcb {
            return self.act_ucb(obs);
        }
        greedy_act(&self.ensemble, obs, self.ensemble.active_head)
    }

    /// Q+UCB acting rule: exploiter-mean Q plus a spread bonus per action.
    fn act_ucb(&mut self, obs: &[f64]) -> Result<usize> {
        let k = self.cfg.exploiters;
        let per_head: Vec<Vec<f64>> = (0..k)
            .map(|h| q_value(&self.ensemble, h, obs))
            .collect::<Result<_>>()?;
        let mut scores = vec![0.0; self.ensemble.num_actions];
        let mut column = vec![0.0; k];
        for (a, score) in scores.iter_mut().enumerate() {
            for (h, q) in per_head.iter().enumerate() {
                column[h] = q[a];
            }
            let mean = column.iter().sum::<f64>() / k as f64;
            *score = mean + self.cfg.beta * qu_sigma(&column)?;
        }
        Ok(argmax_tie_low(&scores))
    }

    /// Record one environment step and run the learning schedule.
    pub fn observe(
        &mut self,
        obs: &[f64],
        action: usize,
        reward: f64,
        discount: f64,
        next_obs: &[f64],
    ) -> Result<()> {
        if let Some(b) = &mut self.bandit {
            b.update(self.ensemble.active_head, reward);
        }
        let mut stored_reward = reward;
        if let Some(table) = &mut self.counts {
            let state = one_hot_index(obs)
                .ok_or_else(|| Error::contract("count bonus requires one-hot observations"))?;
            stored_reward += self.cfg.beta * cts_bonus(table.count(state, action));
            table.record(state, action);
        }
        let total = self.cfg.ensemble_total();
        let mask: Vec<f64> = (0..total)
            .map(|_| f64::from(self.rng_masks.bernoulli(self.cfg.mask_prob)))
            .collect();
        let noise: Vec<f64> = (0..total).map(|_| self.rng_masks.normal()).collect();
        self.replay.add(
            Transition {
                obs: obs.to_vec(),
                action,
                reward: stored_reward,
                discount,
                next_obs: next_obs.to_vec(),
                mask,
                noise,
            },
            total,
        )?;
        self.total_steps += 1;
        if self.replay.len() >= self.cfg.min_replay_size
            && self.total_steps % self.cfg.steps_per_sgd == 0
        {
            self.sgd_step()?;
        }
        Ok(())
    }

    /// One optimizer step per head on a fresh batch, plus target syncs.
    fn sgd_step(&mut self) -> Result<()> {
        let batch = self
            .replay
            .sample(self.cfg.batch_size, &mut self.rng_replay)?;
        let out = tdu_loss(
            &self.ensemble,
            &batch,
            &self.cfg,
            self.variant.intrinsic_mode(),
            None,
            Some(&mut self.cache),
        )?;
        drop(batch);
        for (h, grad) in self.ensemble.heads.iter_mut().zip(out.grads.iter()) {
            h.adam.step(&mut h.online, grad);
            h.opt_steps += 1;
        }
        for (idx, h) in self.ensemble.heads.iter_mut().enumerate() {
            if h.opt_steps % self.cfg.target_update_period == 0 {
                h.target = h.online.clone();
                self.cache.invalidate_target(idx);
            }
        }
        Ok(())
    }
}
