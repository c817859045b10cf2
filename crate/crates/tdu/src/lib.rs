//! Exploration via temporal-difference uncertainty on bootstrapped Q-ensembles.
//!
//! The crate trains an ensemble of `K` exploiter and `N` explorer Q-networks
//! from a shared replay buffer. The sample standard deviation of the
//! exploiters' TD-errors on each sampled transition becomes an intrinsic
//! reward for the explorers, so the explorers learn to seek out data the
//! exploiters are uncertain about. Episodes act greedily under one uniformly
//! sampled head.
//!
//! Main pieces:
//!
//! - [`nn`]: f64 MLP with exact reverse-mode gradients, Adam, seeded streams.
//! - [`envs`]: Deep Sea (deterministic and stochastic) and the Binary Tree MDP.
//! - [`replay`]: uniform ring-buffer replay with per-head bootstrap masks.
//! - [`agents`]: the ensemble agent, its loss, and ablation variants.
//! - [`bias`]: exact moment-propagation diagnostics on small tabular MDPs.
//! - [`metrics`]: regret accounting, CSV emission, SVG learning curves.
//! - [`config`] / [`harness`]: experiment configuration and sweep execution.
//!
//! See the `examples/` directory for one runnable example per capability, and
//! the `tdu` binary for the command-line front end.

pub mod agents;
pub mod bias;
pub mod config;
pub mod envs;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod replay;

pub use error::{Error, Result};
