//! Small enumerable MDPs, exact policy evaluation, and beliefs over MDPs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nn::RngStream;

/// A finite MDP with mean rewards and a fixed deterministic evaluation
/// policy. Index `(s, a)` flattens to `s * num_actions + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    /// `transition[(s * A + a) * S + s']` = P(s' | s, a).
    pub transition: Vec<f64>,
    /// Mean reward per (s, a).
    pub reward: Vec<f64>,
    pub gamma: f64,
    /// Deterministic policy, one action per state.
    pub policy: Vec<usize>,
}

impl TabularMdp {
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[self.pair(s, a) * self.num_states + s2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.policy.len() != self.num_states
            || self.reward.len() != self.num_pairs()
            || self.transition.len() != self.num_pairs() * self.num_states
        {
            return Err(Error::invalid("MDP table sizes are inconsistent"));
        }
        if self.policy.iter().any(|&a| a >= self.num_actions) {
            return Err(Error::invalid("policy action out of range"));
        }
        for sa in 0..self.num_pairs() {
            let row = &self.transition[sa * self.num_states..(sa + 1) * self.num_states];
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid("transition probability outside [0, 1]"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("transition row {sa} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Exact `Q_pi` by solving the linear Bellman system
    /// `Q = R + gamma * P_pi Q` directly.
    pub fn exact_q(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.num_pairs();
        let mut m = DMatrix::<f64>::identity(n, n);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.pair(s, a);
                for s2 in 0..self.num_states {
                    let p = self.prob(s, a, s2);
                    if p != 0.0 {
                        let col = self.pair(s2, self.policy[s2]);
                        m[(row, col)] -= self.gamma * p;
                    }
                }
            }
        }
        let r = DVector::from_column_slice(&self.reward);
        let q = m.lu().solve(&r).ok_or_else(|| {
            Error::invalid("singular Bellman system (gamma = 1 on a recurrent chain?)")
        })?;
        Ok(q.iter().copied().collect())
    }

    /// A random ergodic MDP, for statistical oracles and random batteries.
    pub fn random(num_states: usize, num_actions: usize, gamma: f64, rng: &mut RngStream) -> Self {
        let pairs = num_states * num_actions;
        let mut transition = vec![0.0; pairs * num_states];
        for sa in 0..pairs {
            let row = &mut transition[sa * num_states..(sa + 1) * num_states];
            let mut sum = 0.0;
            for p in row.iter_mut() {
                // Offset keeps every entry positive, hence the chain ergodic.
                *p = 0.05 + rng.uniform();
                sum += *p;
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
        let reward = (0..pairs).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let policy = (0..num_states).map(|_| rng.index(num_actions)).collect();
        TabularMdp {
            num_states,
            num_actions,
            transition,
            reward,
            gamma,
            policy,
        }
    }
}

/// A finite-support belief over MDPs sharing state/action spaces, policy and
/// discount.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpBelief {
    pub support: Vec<TabularMdp>,
    pub probs: Vec<f64>,
}

/// Exact first and second belief moments of `Q^M_pi`, plus the per-atom Q
/// tables they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMoments {
    /// Per-atom exact Q tables, aligned with the belief support.
    pub q_tables: Vec<Vec<f64>>,
    /// `E_M[Q^M_pi]` per (s, a).
    pub mean: Vec<f64>,
    /// `V_M[Q^M_pi]` per (s, a).
    pub var: Vec<f64>,
    /// `E_M[(Q^M_pi)^2]` per (s, a).
    pub second: Vec<f64>,
}

impl MdpBelief {
    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() || self.support.len() != self.probs.len() {
            return Err(Error::invalid("belief support/probability mismatch"));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || self.probs.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid(
                "belief probabilities must be a distribution",
            ));
        }
        let first = &self.support[0];
        for m in &self.support[1..] {
            if m.num_states != first.num_states
                || m.num_actions != first.num_actions
                || m.gamma != first.gamma
                || m.policy != first.policy
            {
                return Err(Error::invalid(
                    "belief atoms must share state/action space, policy and discount",
                ));
            }
        }
        Ok(())
    }

    pub fn num_pairs(&self) -> usize {
        self.support[0].num_pairs()
    }

    pub fn gamma(&self) -> f64 {
        self.support[0].gamma
    }

    /// Belief-mixture mean reward per (s, a).
    pub fn mean_reward(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_pairs()];
        for (m, &p) in self.support.iter().zip(self.probs.iter()) {
            for (o, &r) in out.iter_mut().zip(m.reward.iter()) {
                *o += p * r;
            }
        }
        out
    }

    /// Belief-mixture transition kernel.
    pub fn mean_transition(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.support[0].transition.len()];
        for (m, &p) in self.support.iter().zip(self.probs.iter()) {
            for (o, &t) in out.iter_mut().zip(m.transition.iter()) {
                *o += p * t;
            }
        }
        out
    }

    /// Exact moments of `Q^M_pi` over the finite support.
    pub fn moments(&self) -> Result<BeliefMoments> {
        self.validate()?;
        let q_tables: Vec<Vec<f64>> = self
            .support
            .iter()
            .map(TabularMdp::exact_q)
            .collect::<Result<_>>()?;
        let n = self.num_pairs();
        let mut mean = vec![0.0; n];
        let mut second = vec![0.0; n];
        for (q, &p) in q_tables.iter().zip(self.probs.iter()) {
            for i in 0..n {
                mean[i] += p * q[i];
                second[i] += p * q[i] * q[i];
            }
        }
        let var = second
            .iter()
            .zip(mean.iter())
            .map(|(&s, &m)| s - m * m)
            .collect();
        Ok(BeliefMoments {
            q_tables,
            mean,
            var,
            second,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(reward: f64, gamma: f64) -> TabularMdp {
        TabularMdp {
            num_states: 1,
            num_actions: 1,
            transition: vec![1.0],
            reward: vec![reward],
            gamma,
            policy: vec![0],
        }
    }

    #[test]
    fn geometric_series_single_state() {
        let q = single_state(1.0, 0.5).exact_q().unwrap();
        assert!((q[0] - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_rewards_give_zero_q() {
        let mut rng = RngStream::new(0);
        let mut m = TabularMdp::random(4, 2, 0.9, &mut rng);
        m.reward = vec![0.0; m.num_pairs()];
        assert!(m.exact_q().unwrap().iter().all(|&q| q.abs() <= 1e-12));
    }

    #[test]
    fn gamma_one_recurrent_chain_is_singular() {
        assert!(single_state(1.0, 1.0).exact_q().is_err());
    }

    #[test]
    fn invalid_transition_rows_rejected() {
        let mut m = single_state(1.0, 0.5);
        m.transition = vec![0.7];
        assert!(m.exact_q().is_err());
    }

    #[test]
    fn exact_q_matches_monte_carlo() {
        // 10^4 truncated rollouts per start pair on a random 5-state MDP.
        let mut rng = RngStream::new(3);
        let m = TabularMdp::random(5, 2, 0.9, &mut rng);
        let q = m.exact_q().unwrap();
        let rollouts = 10_000;
        let horizon = 200; // gamma^200 ~ 7e-10: truncation negligible
        for s0 in 0..5 {
            for a0 in 0..2 {
                let mut sum = 0.0;
                let mut sumsq = 0.0;
                for _ in 0..rollouts {
                    let mut ret = 0.0;
                    let mut disc = 1.0;
                    let (mut s, mut a) = (s0, a0);
                    for _ in 0..horizon {
                        ret += disc * m.reward[m.pair(s, a)];
                        disc *= m.gamma;
                        let u = rng.uniform();
                        let mut acc = 0.0;
                        let mut next = m.num_states - 1;
                        for s2 in 0..m.num_states {
                            acc += m.prob(s, a, s2);
                            if u < acc {
                                next = s2;
                                break;
                            }
                        }
                        s = next;
                        a = m.policy[s];
                    }
                    sum += ret;
                    sumsq += ret * ret;
                }
                let mc_mean = sum / f64::from(rollouts);
                let mc_var = sumsq / f64::from(rollouts) - mc_mean * mc_mean;
                let se = (mc_var / f64::from(rollouts)).sqrt();
                let dev = (q[m.pair(s0, a0)] - mc_mean).abs();
                assert!(
                    dev <= 3.0 * se.max(1e-3),
                    "({s0},{a0}): dev {dev} vs se {se}"
                );
            }
        }
    }

    #[test]
    fn single_mdp_belief_has_zero_variance() {
        let b = MdpBelief {
            support: vec![single_state(1.0, 0.5)],
            probs: vec![1.0],
        };
        let m = b.moments().unwrap();
        assert!(m.var.iter().all(|&v| v.abs() <= 1e-15));
    }

    #[test]
    fn symmetric_reward_split_gives_unit_variance() {
        // Two atoms differing by +/-1 in the sole reward, gamma -> myopic Q:
        // with gamma = 0, Q = r, so V at that pair is exactly 1.
        let mut up = single_state(1.0, 0.0);
        let mut down = single_state(-1.0, 0.0);
        up.gamma = 0.0;
        down.gamma = 0.0;
        let b = MdpBelief {
            support: vec![up, down],
            probs: vec![0.5, 0.5],
        };
        let m = b.moments().unwrap();
        assert!((m.var[0] - 1.0).abs() <= 1e-12);
        assert!(m.mean[0].abs() <= 1e-12);
    }

    #[test]
    fn belief_moments_match_sampling_oracle() {
        // 10^5 draws of M from a random 3-atom belief.
        let mut rng = RngStream::new(7);
        let mut support: Vec<TabularMdp> = (0..3)
            .map(|_| TabularMdp::random(3, 2, 0.8, &mut rng))
            .collect();
        let policy = support[0].policy.clone();
        for m in support.iter_mut() {
            m.policy = policy.clone();
        }
        let probs = vec![0.5, 0.3, 0.2];
        let belief = MdpBelief {
            support,
            probs: probs.clone(),
        };
        let exact = belief.moments().unwrap();

        let draws = 100_000;
        let n = belief.num_pairs();
        let mut sum = vec![0.0; n];
        let mut sumsq = vec![0.0; n];
        for _ in 0..draws {
            let u = rng.uniform();
            let atom = if u < probs[0] {
                0
            } else if u < probs[0] + probs[1] {
                1
            } else {
                2
            };
            for i in 0..n {
                let q = exact.q_tables[atom][i];
                sum[i] += q;
                sumsq[i] += q * q;
            }
        }
        for i in 0..n {
            let mean = sum[i] / f64::from(draws);
            let second = sumsq[i] / f64::from(draws);
            let var = second - mean * mean;
            // Standard error of the sampled mean of Q.
            let se = (exact.var[i] / f64::from(draws)).sqrt().max(1e-6);
            assert!((mean - exact.mean[i]).abs() <= 3.0 * se);
            assert!((var - exact.var[i]).abs() <= 0.05 * exact.var[i].abs().max(0.05));
        }
    }

    #[test]
    fn mismatched_belief_rejected() {
        let a = single_state(1.0, 0.5);
        let mut b = single_state(1.0, 0.9);
        b.gamma = 0.9;
        let belief = MdpBelief {
            support: vec![a, b],
            probs: vec![0.5, 0.5],
        };
        assert!(belief.validate().is_err());
    }
}
