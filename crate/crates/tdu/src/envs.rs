//! Episodic benchmark environments with known optimal returns.
//!
//! Deep Sea is an `N x N` grid in which the agent descends one row per step
//! and only one of the `2^N` deterministic policies reaches the rewarding
//! corner. The Binary Tree MDP is a depth-`L` chain where the wrong action at
//! any branch ends the episode with zero reward. Both expose exact optimal
//! expected returns so regret can be computed without estimation.

use crate::error::{Error, Result};
use crate::nn::RngStream;

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// 1.0 while the episode continues, 0.0 on the terminal step.
    pub discount: f64,
    pub episode_done: bool,
}

/// Common episodic interface used by the training harness.
pub trait Environment {
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepResult>;
    fn obs_dim(&self) -> usize;
    fn num_actions(&self) -> usize {
        2
    }
    /// Exact optimal expected return per episode.
    fn optimal_return(&self) -> f64;
}

/// Deep Sea: the agent starts top-left, descends one row per step, and must
/// move right `N` times in a row to reach the goal at the bottom-right. Each
/// cell independently remaps which raw action means "right". The stochastic
/// variant inverts the executed direction with probability `1/N`.
#[derive(Debug, Clone)]
pub struct DeepSeaEnv {
    size: usize,
    /// Per-cell flag: `true` means raw action 1 is "right" in that cell.
    action_map: Vec<bool>,
    stochastic: bool,
    move_cost: f64,
    goal_reward: f64,
    row: usize,
    col: usize,
    done: bool,
    rng: RngStream,
}

impl DeepSeaEnv {
    /// Build a Deep Sea instance of the given size. The action map is fixed
    /// by `rng` at construction and reused for every episode; transition
    /// noise (stochastic variant) draws from the same stream.
    pub fn new(size: usize, stochastic: bool, rng: &RngStream) -> Result<Self> {
        if size < 4 {
            return Err(Error::invalid("deep sea size must be at least 4"));
        }
        let mut map_rng = rng.derive("deep-sea-action-map");
        let action_map = (0..size * size).map(|_| map_rng.bernoulli(0.5)).collect();
        Ok(DeepSeaEnv {
            size,
            action_map,
            stochastic,
            move_cost: 0.01 / size as f64,
            goal_reward: 1.0,
            row: 0,
            col: 0,
            done: true,
            rng: rng.derive("deep-sea-transitions"),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stochastic(&self) -> bool {
        self.stochastic
    }

    /// Whether raw action 1 means "right" at `(row, col)`.
    pub fn action_map_at(&self, row: usize, col: usize) -> bool {
        self.action_map[row * self.size + col]
    }

    /// The raw action that means "right" at `(row, col)`.
    pub fn right_action(&self, row: usize, col: usize) -> usize {
        usize::from(self.action_map_at(row, col))
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.size * self.size];
        if self.row < self.size {
            obs[self.row * self.size + self.col] = 1.0;
        }
        obs
    }

    /// Optimal expected return for the deterministic variant in closed form,
    /// or by exact dynamic programming over the grid when stochastic.
    pub fn exact_optimal_return(&self) -> f64 {
        if !self.stochastic {
            return self.goal_reward - self.size as f64 * self.move_cost;
        }
        let n = self.size;
        let p_bad = 1.0 / n as f64;
        // v[col] holds the value at the current row; iterate rows backwards.
        // At row == n the episode is over.
        let mut v = vec![0.0; n + 1];
        for row in (0..n).rev() {
            let mut next = vec![0.0; n + 1];
            for col in 0..=row {
                // Executing "right" from (row, col).
                let right_value = |v: &[f64]| -> f64 {
                    let goal = if row == n - 1 && col == n - 1 {
                        self.goal_reward
                    } else {
                        0.0
                    };
                    let target = (col + 1).min(n);
                    goal - self.move_cost + if row + 1 < n { v[target] } else { 0.0 }
                };
                let left_value = |v: &[f64]| -> f64 {
                    let target = col.saturating_sub(1);
                    if row + 1 < n {
                        v[target]
                    } else {
                        0.0
                    }
                };
                let q_intend_right = (1.0 - p_bad) * right_value(&v) + p_bad * left_value(&v);
                let q_intend_left = (1.0 - p_bad) * left_value(&v) + p_bad * right_value(&v);
                next[col] = q_intend_right.max(q_intend_left);
            }
            v = next;
        }
        v[0]
    }
}

impl Environment for DeepSeaEnv {
    fn reset(&mut self) -> Vec<f64> {
        self.row = 0;
        self.col = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::contract("deep sea step after episode end"));
        }
        if action > 1 {
            return Err(Error::invalid("deep sea action must be 0 or 1"));
        }
        let intend_right = action == self.right_action(self.row, self.col);
        let executed_right = if self.stochastic {
            let bad = self.rng.bernoulli(1.0 / self.size as f64);
            intend_right != bad
        } else {
            intend_right
        };

        let mut reward = 0.0;
        if executed_right {
            if self.row == self.size - 1 && self.col == self.size - 1 {
                reward += self.goal_reward;
            }
            reward -= self.move_cost;
            self.col = (self.col + 1).min(self.size - 1);
        } else {
            self.col = self.col.saturating_sub(1);
        }
        self.row += 1;
        self.done = self.row == self.size;
        Ok(StepResult {
            observation: self.observation(),
            reward,
            discount: if self.done { 0.0 } else { 1.0 },
            episode_done: self.done,
        })
    }

    fn obs_dim(&self) -> usize {
        self.size * self.size
    }

    fn optimal_return(&self) -> f64 {
        self.exact_optimal_return()
    }
}

/// Binary Tree MDP: at each branch one action advances and the other ends the
/// episode with zero reward; passing the final branch pays 1.
#[derive(Debug, Clone)]
pub struct BinaryTreeEnv {
    depth: usize,
    /// Per-branch flag: `true` means raw action 1 advances.
    action_map: Vec<bool>,
    branch: usize,
    done: bool,
}

impl BinaryTreeEnv {
    pub fn new(depth: usize, rng: &RngStream) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("binary tree depth must be at least 1"));
        }
        let mut map_rng = rng.derive("binary-tree-action-map");
        let action_map = (0..depth).map(|_| map_rng.bernoulli(0.5)).collect();
        Ok(BinaryTreeEnv {
            depth,
            action_map,
            branch: 0,
            done: true,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// The raw action that advances at `branch`.
    pub fn advance_action(&self, branch: usize) -> usize {
        usize::from(self.action_map[branch])
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.depth];
        if !self.done {
            obs[self.branch] = 1.0;
        }
        obs
    }
}

impl Environment for BinaryTreeEnv {
    fn reset(&mut self) -> Vec<f64> {
        self.branch = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::contract("binary tree step after episode end"));
        }
        if action > 1 {
            return Err(Error::invalid("binary tree action must be 0 or 1"));
        }
        let mut reward = 0.0;
        if action == self.advance_action(self.branch) {
            self.branch += 1;
            if self.branch == self.depth {
                reward = 1.0;
                self.done = true;
            }
        } else {
            self.done = true;
        }
        Ok(StepResult {
            observation: self.observation(),
            reward,
            discount: if self.done { 0.0 } else { 1.0 },
            episode_done: self.done,
        })
    }

    fn obs_dim(&self) -> usize {
        self.depth
    }

    fn optimal_return(&self) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_deep_sea_policy(env: &mut DeepSeaEnv, want_right: bool) -> f64 {
        let mut obs = env.reset();
        let mut ret = 0.0;
        loop {
            let idx = obs.iter().position(|&v| v == 1.0).unwrap_or(0);
            let (row, col) = (idx / env.size(), idx % env.size());
            let right = env.right_action(row, col);
            let action = if want_right { right } else { 1 - right };
            let step = env.step(action).unwrap();
            ret += step.reward;
            if step.episode_done {
                return ret;
            }
            obs = step.observation;
        }
    }

    #[test]
    fn deep_sea_reset_is_one_hot_origin() {
        let rng = RngStream::new(0);
        let mut env = DeepSeaEnv::new(10, false, &rng).unwrap();
        let obs = env.reset();
        assert_eq!(obs.len(), 100);
        assert_eq!(obs[0], 1.0);
        assert_eq!(obs.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(env.reset(), obs);
    }

    #[test]
    fn deep_sea_episode_length_is_n() {
        let rng = RngStream::new(3);
        let mut env = DeepSeaEnv::new(6, false, &rng).unwrap();
        env.reset();
        for i in 0..6 {
            let step = env.step(0).unwrap();
            assert_eq!(step.episode_done, i == 5);
            assert_eq!(step.discount, if i == 5 { 0.0 } else { 1.0 });
        }
        assert!(env.step(0).is_err());
    }

    #[test]
    fn deep_sea_always_right_return() {
        // Hand evaluation: N right moves cost N * 0.01/N, goal pays 1.
        let rng = RngStream::new(1);
        let mut env = DeepSeaEnv::new(10, false, &rng).unwrap();
        let ret = run_deep_sea_policy(&mut env, true);
        assert!((ret - 0.99).abs() < 1e-12, "ret={ret}");
    }

    #[test]
    fn deep_sea_always_left_return_zero() {
        let rng = RngStream::new(1);
        let mut env = DeepSeaEnv::new(10, false, &rng).unwrap();
        let ret = run_deep_sea_policy(&mut env, false);
        assert_eq!(ret, 0.0);
    }

    #[test]
    fn deep_sea_rejects_bad_args() {
        let rng = RngStream::new(0);
        assert!(DeepSeaEnv::new(3, false, &rng).is_err());
        let mut env = DeepSeaEnv::new(4, false, &rng).unwrap();
        env.reset();
        assert!(env.step(2).is_err());
    }

    #[test]
    fn deep_sea_stochastic_goal_probability() {
        // Closed form vs Monte Carlo: always intending right reaches the goal
        // iff no step is inverted, so P = (1 - 1/N)^N.
        let n = 10usize;
        let episodes = 100_000;
        let rng = RngStream::new(77);
        let mut env = DeepSeaEnv::new(n, true, &rng).unwrap();
        let mut hits = 0u32;
        for _ in 0..episodes {
            let ret = run_deep_sea_policy(&mut env, true);
            if ret > 0.5 {
                hits += 1;
            }
        }
        let p_hat = f64::from(hits) / episodes as f64;
        let p = (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!((p_hat - p).abs() < 0.01, "p_hat={p_hat} p={p}");
    }

    #[test]
    fn deep_sea_optimal_return_deterministic() {
        let rng = RngStream::new(0);
        let env = DeepSeaEnv::new(10, false, &rng).unwrap();
        assert!((env.optimal_return() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn deep_sea_optimal_return_stochastic_matches_monte_carlo() {
        // DP vs Monte Carlo under the optimal policy: intend right while the
        // diagonal (and hence the goal) is still reachable, otherwise intend
        // left to avoid paying move costs for an unreachable goal.
        let n = 10usize;
        let rng = RngStream::new(5);
        let mut env = DeepSeaEnv::new(n, true, &rng).unwrap();
        let exact = env.optimal_return();

        let episodes = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..episodes {
            let mut obs = env.reset();
            let mut ret = 0.0;
            loop {
                let idx = obs.iter().position(|&v| v == 1.0).unwrap_or(0);
                let (row, col) = (idx / n, idx % n);
                let right = env.right_action(row, col);
                let action = if col == row { right } else { 1 - right };
                let step = env.step(action).unwrap();
                ret += step.reward;
                if step.episode_done {
                    break;
                }
                obs = step.observation;
            }
            sum += ret;
            sumsq += ret * ret;
        }
        let mean = sum / episodes as f64;
        let var = sumsq / episodes as f64 - mean * mean;
        let sigma = (var / episodes as f64).sqrt();
        assert!(
            (mean - exact).abs() < 3.0 * sigma + 1e-9,
            "mc={mean} dp={exact} sigma={sigma}"
        );
    }

    #[test]
    fn deep_sea_exactly_one_policy_reaches_goal() {
        // Brute force over all 2^N action sequences along the descent.
        for n in [4usize, 8, 12] {
            let rng = RngStream::new(n as u64);
            let mut env = DeepSeaEnv::new(n, false, &rng).unwrap();
            let mut winners = 0u32;
            for bits in 0..(1u32 << n) {
                env.reset();
                let mut ret = 0.0;
                for step_idx in 0..n {
                    let action = ((bits >> step_idx) & 1) as usize;
                    ret += env.step(action).unwrap().reward;
                }
                if ret > 0.5 {
                    winners += 1;
                }
            }
            assert_eq!(winners, 1, "n={n}");
        }
    }

    #[test]
    fn deep_sea_action_map_is_seed_deterministic_and_uniform() {
        let rng = RngStream::new(9);
        let a = DeepSeaEnv::new(8, false, &rng).unwrap();
        let b = DeepSeaEnv::new(8, false, &rng).unwrap();
        assert_eq!(a.action_map, b.action_map);

        // Chi-square sanity on the per-cell flag over 10^4 maps.
        let cells = 16usize;
        let maps = 10_000usize;
        let mut ones = vec![0u32; cells];
        for seed in 0..maps {
            let env = DeepSeaEnv::new(4, false, &RngStream::new(seed as u64)).unwrap();
            for (c, one) in ones.iter_mut().enumerate() {
                if env.action_map[c] {
                    *one += 1;
                }
            }
        }
        let expect = maps as f64 / 2.0;
        let chi2: f64 = ones
            .iter()
            .map(|&o| {
                let o = f64::from(o);
                (o - expect).powi(2) / expect + ((maps as f64 - o) - expect).powi(2) / expect
            })
            .sum();
        // 16 cells x 1 dof each; chi2(16) 1% critical value is 32.0.
        assert!(chi2 < 32.0, "chi2={chi2}");
    }

    #[test]
    fn binary_tree_depth_one() {
        let rng = RngStream::new(0);
        let mut env = BinaryTreeEnv::new(1, &rng).unwrap();
        env.reset();
        let step = env.step(env.advance_action(0)).unwrap();
        assert_eq!(step.reward, 1.0);
        assert!(step.episode_done);
    }

    #[test]
    fn binary_tree_wrong_action_terminates() {
        let rng = RngStream::new(1);
        let mut env = BinaryTreeEnv::new(3, &rng).unwrap();
        env.reset();
        let wrong = 1 - env.advance_action(0);
        let step = env.step(wrong).unwrap();
        assert_eq!(step.reward, 0.0);
        assert!(step.episode_done);
        assert!(env.step(0).is_err());
    }

    #[test]
    fn binary_tree_random_policy_success_rate() {
        // Monte Carlo vs closed form 2^-L for a uniform random policy.
        let depth = 10usize;
        let episodes = 1_000_000usize;
        let rng = RngStream::new(2);
        let mut env = BinaryTreeEnv::new(depth, &rng).unwrap();
        let mut policy_rng = RngStream::new(3);
        let mut hits = 0u32;
        for _ in 0..episodes {
            env.reset();
            loop {
                let action = usize::from(policy_rng.bernoulli(0.5));
                let step = env.step(action).unwrap();
                if step.episode_done {
                    if step.reward > 0.5 {
                        hits += 1;
                    }
                    break;
                }
            }
        }
        let p = 0.5f64.powi(depth as i32);
        let sigma = (p * (1.0 - p) / episodes as f64).sqrt();
        let p_hat = f64::from(hits) / episodes as f64;
        assert!((p_hat - p).abs() < 3.0 * sigma, "p_hat={p_hat} p={p}");
    }

    #[test]
    fn binary_tree_optimal_return_is_one() {
        let rng = RngStream::new(4);
        for depth in [1usize, 5, 50] {
            let env = BinaryTreeEnv::new(depth, &rng).unwrap();
            assert_eq!(env.optimal_return(), 1.0);
        }
    }

    #[test]
    fn observations_are_valid_one_hot() {
        let rng = RngStream::new(6);
        let mut env = DeepSeaEnv::new(7, true, &rng).unwrap();
        let mut obs = env.reset();
        for _ in 0..7 {
            let ones = obs.iter().filter(|&&v| v == 1.0).count();
            let zeros = obs.iter().filter(|&&v| v == 0.0).count();
            assert_eq!(ones + zeros, obs.len());
            assert_eq!(ones, 1);
            let step = env.step(0).unwrap();
            obs = step.observation;
            if step.episode_done {
                assert!(obs.iter().all(|&v| v == 0.0));
                break;
            }
        }
    }
}
