//! Ensemble state, value composition, and the per-transition TD quantities.

use crate::agents::TduConfig;
use crate::error::{Error, Result};
use crate::nn::{AdamState, InitScheme, MlpParams, RngStream};
use crate::replay::Transition;

/// One ensemble member: an online/target pair plus a fixed random prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub online: MlpParams,
    pub target: MlpParams,
    /// Fixed prior composed with the online network; never updated.
    pub prior: MlpParams,
    /// Prior composed with the target network; identical to `prior` and
    /// likewise never updated.
    pub prior_target: MlpParams,
    pub adam: AdamState,
    /// Completed optimizer steps for this head.
    pub opt_steps: u64,
}

/// All heads of one agent. Heads `0..K-1` are exploiters, `K..K+N-1`
/// explorers; the distinction lives entirely in the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub heads: Vec<Head>,
    /// Head acted under this episode; resampled at every episode start.
    pub active_head: usize,
    pub prior_scale: f64,
    pub obs_dim: usize,
    pub num_actions: usize,
}

impl EnsembleState {
    /// Initialise `K + N` heads. Each head's online and prior networks are
    /// drawn from independent named substreams of `rng`, so the
    /// initialisation of head `k` does not depend on the ensemble size.
    pub fn init(
        cfg: &TduConfig,
        obs_dim: usize,
        num_actions: usize,
        rng: &RngStream,
    ) -> Result<Self> {
        let total = cfg.ensemble_total();
        if total == 0 {
            return Err(Error::invalid("ensemble must have at least one head"));
        }
        let mut sizes = Vec::with_capacity(cfg.hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(num_actions);

        let mut heads = Vec::with_capacity(total);
        for k in 0..total {
            let mut online_rng = rng.derive_indexed("head-online", k as u64);
            let mut prior_rng = rng.derive_indexed("head-prior", k as u64);
            let online = MlpParams::init(&sizes, &mut online_rng, InitScheme::HeUniform)?;
            let prior = MlpParams::init(&sizes, &mut prior_rng, InitScheme::HeUniform)?;
            // The same fixed prior is composed with the online and the target
            // network. An independently drawn target-side prior injects a
            // persistent random field into the Bellman operator: values
            // inflate by lambda * E[max residual] per bootstrap level and the
            // converged greedy policy is randomized, which destroys deep
            // exploration at lambda >= 1.
            let prior_target = prior.clone();
            let adam = AdamState::new(&online, cfg.learning_rate);
            heads.push(Head {
                target: online.clone(),
                online,
                prior,
                prior_target,
                adam,
                opt_steps: 0,
            });
        }
        Ok(EnsembleState {
            heads,
            active_head: 0,
            prior_scale: cfg.prior_scale,
            obs_dim,
            num_actions,
        })
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }
}

/// `Q(s, .) = online(s) + lambda * prior(s)` for one head.
pub fn q_value(ens: &EnsembleState, head: usize, obs: &[f64]) -> Result<Vec<f64>> {
    let h = &ens.heads[head];
    let mut q = h.online.forward(obs)?;
    if ens.prior_scale != 0.0 {
        let p = h.prior.forward(obs)?;
        for (q, p) in q.iter_mut().zip(p.iter()) {
            *q += ens.prior_scale * p;
        }
    }
    Ok(q)
}

/// Target-side composition `target(s) + lambda * prior_target(s)`.
pub fn q_target(ens: &EnsembleState, head: usize, obs: &[f64]) -> Result<Vec<f64>> {
    let h = &ens.heads[head];
    let mut q = h.target.forward(obs)?;
    if ens.prior_scale != 0.0 {
        let p = h.prior_target.forward(obs)?;
        for (q, p) in q.iter_mut().zip(p.iter()) {
            *q += ens.prior_scale * p;
        }
    }
    Ok(q)
}

/// Uniform head choice for a new episode.
pub fn select_head(ens: &EnsembleState, rng: &mut RngStream) -> usize {
    rng.index(ens.num_heads())
}

/// Index of the maximum, ties broken by the lowest index.
pub fn argmax_tie_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy action under `q_value(head, obs)`.
pub fn act(ens: &EnsembleState, obs: &[f64], head: usize) -> Result<usize> {
    Ok(argmax_tie_low(&q_value(ens, head, obs)?))
}

/// TD-error of one head on one transition:
/// `delta = r + discount * gamma * Q_target(s', a*) - Q_online(s, a)`.
///
/// With `double_dqn` the bootstrap action `a*` is the online network's argmax
/// at `s'` but its value is read from the target composition; otherwise `a*`
/// maximises the target composition itself. `reward_override` substitutes the
/// stored reward (augmented reward, per-head noise).
pub fn td_error(
    ens: &EnsembleState,
    head: usize,
    t: &Transition,
    gamma: f64,
    reward_override: Option<f64>,
    double_dqn: bool,
) -> Result<f64> {
    let r = reward_override.unwrap_or(t.reward);
    let q_sa = q_value(ens, head, &t.obs)?[t.action];
    if t.discount == 0.0 {
        return Ok(r - q_sa);
    }
    let q_next = q_target(ens, head, &t.next_obs)?;
    let a_star = if double_dqn {
        argmax_tie_low(&q_value(ens, head, &t.next_obs)?)
    } else {
        argmax_tie_low(&q_next)
    };
    Ok(r + t.discount * gamma * q_next[a_star] - q_sa)
}

/// Bessel-corrected sample standard deviation of the exploiter TD-errors.
pub fn tdu_sigma(td_errors: &[f64]) -> Result<f64> {
    if td_errors.len() < 2 {
        return Err(Error::invalid("sigma needs at least 2 TD-error samples"));
    }
    Ok(sample_std(td_errors))
}

/// Sample standard deviation over per-head Q-values at one `(s, a)`; the
/// intrinsic signal of the QU ablation and the acting bonus of Q+UCB.
pub fn qu_sigma(q_values: &[f64]) -> Result<f64> {
    if q_values.len() < 2 {
        return Err(Error::invalid("sigma needs at least 2 Q-value samples"));
    }
    Ok(sample_std(q_values))
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (ss / (n - 1.0)).sqrt()
}

/// QEX intrinsic reward: absolute TD-error of the primary network.
pub fn qex_reward(primary_td_error: f64) -> f64 {
    primary_td_error.abs()
}

/// Count-based bonus `(N(s, a) + 0.01)^(-1/2)`.
pub fn cts_bonus(count: f64) -> f64 {
    (count + 0.01).powf(-0.5)
}

/// Index of the hot entry if `obs` is exactly one-hot (a single 1, rest 0).
pub fn one_hot_index(obs: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (i, &v) in obs.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    hot
}
