//! Uniform-sampling ring-buffer replay memory.
//!
//! Transitions carry a per-head bootstrap mask and a per-head reward-noise
//! vector. Both are drawn once when the transition is observed and never
//! change afterwards, so every head sees the same mask each time the
//! transition is resampled.

use crate::error::{Error, Result};
use crate::nn::RngStream;

/// One stored step, shared by all ensemble heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    /// 0.0 at episode end, 1.0 otherwise; the discount factor itself is
    /// applied at loss time.
    pub discount: f64,
    pub next_obs: Vec<f64>,
    /// Bootstrap mask, one entry in {0, 1} per head.
    pub mask: Vec<f64>,
    /// Reward-noise draw, one entry per head.
    pub noise: Vec<f64>,
}

/// FIFO ring buffer with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            storage: Vec::with_capacity(capacity.min(4096)),
            next: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of insertions, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Append a transition, evicting the oldest once full.
    pub fn add(&mut self, transition: Transition, ensemble_size: usize) -> Result<()> {
        if transition.mask.len() != ensemble_size || transition.noise.len() != ensemble_size {
            return Err(Error::invalid(format!(
                "mask/noise length {}/{} does not match ensemble size {}",
                transition.mask.len(),
                transition.noise.len(),
                ensemble_size
            )));
        }
        if transition.mask.iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::invalid("mask entries must be 0 or 1"));
        }
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
        Ok(())
    }

    /// Draw `batch_size` transitions uniformly with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut RngStream) -> Result<Vec<&Transition>> {
        if self.storage.is_empty() {
            return Err(Error::contract("sample from an empty replay buffer"));
        }
        Ok((0..batch_size)
            .map(|_| &self.storage[rng.index(self.storage.len())])
            .collect())
    }

    #[cfg(test)]
    fn contents(&self) -> &[Transition] {
        &self.storage
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transition(tag: f64, heads: usize) -> Transition {
        Transition {
            obs: vec![tag],
            action: 0,
            reward: tag,
            discount: 1.0,
            next_obs: vec![tag + 0.5],
            mask: vec![1.0; heads],
            noise: vec![0.0; heads],
        }
    }

    #[test]
    fn add_grows_until_capacity_then_evicts_fifo() {
        let mut buf = ReplayBuffer::new(2);
        for i in 0..3 {
            buf.add(transition(i as f64 + 1.0, 4), 4).unwrap();
        }
        assert_eq!(buf.len(), 2);
        let rewards: Vec<f64> = buf.contents().iter().map(|t| t.reward).collect();
        assert!(rewards.contains(&2.0) && rewards.contains(&3.0));
    }

    #[test]
    fn add_three_to_empty() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..3 {
            buf.add(transition(i as f64, 4), 4).unwrap();
        }
        assert_eq!(buf.len(), 3);
    }

    #[test]
    fn malformed_mask_rejected() {
        let mut buf = ReplayBuffer::new(4);
        let mut t = transition(1.0, 3);
        buf.add(t.clone(), 4).unwrap_err();
        t.mask[0] = 0.5;
        buf.add(t, 3).unwrap_err();
    }

    #[test]
    fn sample_single_item_repeats() {
        let mut buf = ReplayBuffer::new(4);
        buf.add(transition(7.0, 2), 2).unwrap();
        let mut rng = RngStream::new(0);
        let batch = buf.sample(4, &mut rng).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|t| t.reward == 7.0));
    }

    #[test]
    fn sample_empty_is_error() {
        let buf = ReplayBuffer::new(4);
        let mut rng = RngStream::new(0);
        assert!(buf.sample(1, &mut rng).is_err());
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let mut buf = ReplayBuffer::new(16);
        for i in 0..16 {
            buf.add(transition(i as f64, 2), 2).unwrap();
        }
        let a: Vec<f64> = buf
            .sample(8, &mut RngStream::new(5))
            .unwrap()
            .iter()
            .map(|t| t.reward)
            .collect();
        let b: Vec<f64> = buf
            .sample(8, &mut RngStream::new(5))
            .unwrap()
            .iter()
            .map(|t| t.reward)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_uniform_chi_square() {
        // 10^4 adds then 10^4 draws; chi-square against uniform at 1%.
        let n = 100usize;
        let draws = 10_000usize;
        let mut buf = ReplayBuffer::new(n);
        for i in 0..n {
            buf.add(transition(i as f64, 1), 1).unwrap();
        }
        let mut rng = RngStream::new(11);
        let mut counts = vec![0u32; n];
        for _ in 0..draws / 100 {
            for t in buf.sample(100, &mut rng).unwrap() {
                counts[t.reward as usize] += 1;
            }
        }
        let expect = draws as f64 / n as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (f64::from(c) - expect).powi(2) / expect)
            .sum();
        // chi2 with 99 dof, 1% critical value ~ 134.6
        assert!(chi2 < 134.6, "chi2={chi2}");
    }

    #[test]
    fn stored_mask_and_noise_never_change() {
        let mut buf = ReplayBuffer::new(8);
        let mut t = transition(1.0, 3);
        t.mask = vec![1.0, 0.0, 1.0];
        t.noise = vec![0.25, -1.5, 0.75];
        buf.add(t.clone(), 3).unwrap();
        let mut rng = RngStream::new(1);
        for _ in 0..10 {
            let batch = buf.sample(2, &mut rng).unwrap();
            for got in batch {
                assert_eq!(got.mask, t.mask);
                assert_eq!(got.noise, t.noise);
            }
        }
    }
}
