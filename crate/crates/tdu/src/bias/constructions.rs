//! Canonical verifier instances: a belief plus a posterior engineered to sit
//! in a known regime (exact consistency, function-approximation bias, unit
//! ratios, inverse-discount ratio), plus a randomized in-window generator.

use crate::bias::mdp::{MdpBelief, TabularMdp};
use crate::bias::verify::{Coupling, LinearPosterior, WeightDist};
use crate::error::Result;
use crate::nn::RngStream;

/// One ready-to-verify instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: &'static str,
    pub belief: MdpBelief,
    pub posterior: LinearPosterior,
    pub coupling: Coupling,
}

/// Two-atom belief over a deterministic two-state cycle with different
/// reward tables.
pub fn chain_belief(gamma: f64) -> MdpBelief {
    let template = TabularMdp {
        num_states: 2,
        num_actions: 1,
        transition: vec![0.0, 1.0, 1.0, 0.0],
        reward: vec![0.0, 0.0],
        gamma,
        policy: vec![0, 0],
    };
    let mut a = template.clone();
    a.reward = vec![1.0, 0.5];
    let mut b = template;
    b.reward = vec![0.2, 0.8];
    MdpBelief {
        support: vec![a, b],
        probs: vec![0.5, 0.5],
    }
}

/// Exchangeable two-state cycle: both states carry identical rewards in
/// every atom, so their true Q-values coincide.
pub fn symmetric_belief(gamma: f64) -> MdpBelief {
    let template = TabularMdp {
        num_states: 2,
        num_actions: 1,
        transition: vec![0.0, 1.0, 1.0, 0.0],
        reward: vec![0.5, 0.5],
        gamma,
        policy: vec![0, 0],
    };
    let mut a = template.clone();
    a.reward = vec![1.0, 1.0];
    let mut b = template;
    b.reward = vec![0.25, 0.25];
    MdpBelief {
        support: vec![a, b],
        probs: vec![0.5, 0.5],
    }
}

/// Exact-consistency regime: the posterior is the tabular push-forward of
/// the belief, so both Bellman moment equations hold with zero residual.
pub fn consistency_instance(gamma: f64) -> Result<Instance> {
    let belief = chain_belief(gamma);
    let posterior = LinearPosterior::pushforward(&belief.moments()?, &belief.probs);
    Ok(Instance {
        name: "consistency",
        belief,
        posterior,
        coupling: Coupling::PerAtom,
    })
}

/// Function-approximation-bias regime: a single shared feature must explain
/// two state-action pairs with distinct expected values — more unique
/// predictions than weight degrees of freedom — so the mean Bellman equation
/// cannot be satisfied.
pub fn narrow_posterior_instance(gamma: f64) -> Instance {
    Instance {
        name: "narrow_final_layer",
        belief: chain_belief(gamma),
        posterior: LinearPosterior {
            features: vec![vec![1.0], vec![0.6]],
            weights: WeightDist::Gaussian {
                mean: vec![1.0],
                cov: vec![vec![0.2]],
            },
        },
        coupling: Coupling::Mixture,
    }
}

/// Unit-ratio regime: shared features over exchangeable states force
/// `rho = phi = kappa = alpha = 1`, where the TD-error variance bias equals
/// `(gamma - 1)^2` times the value variance bias.
pub fn unit_ratio_instance(gamma: f64) -> Result<Instance> {
    let belief = symmetric_belief(gamma);
    let mean_q = belief.moments()?.mean[0];
    Ok(Instance {
        name: "unit_ratios",
        belief,
        posterior: LinearPosterior {
            features: vec![vec![1.0], vec![1.0]],
            weights: WeightDist::Finite {
                members: vec![vec![mean_q + 0.5], vec![mean_q - 0.1]],
                probs: vec![0.5, 0.5],
            },
        },
        coupling: Coupling::Mixture,
    })
}

/// Inverse-discount regime along the transition 0 -> 1: the mean bias ratio
/// is exactly `1/gamma`, which cancels the TD-error mean bias.
pub fn inverse_gamma_rho_instance(gamma: f64) -> Result<Instance> {
    let belief = chain_belief(gamma);
    let field = vec![0.9, 0.9 / gamma];
    let posterior = LinearPosterior::shifted_pushforward(&belief.moments()?, &belief.probs, &field);
    Ok(Instance {
        name: "rho_inverse_gamma",
        belief,
        posterior,
        coupling: Coupling::PerAtom,
    })
}

/// A random belief with a positive additive bias field: every transition has
/// a well-defined positive `rho`, so in-window transitions exercise the
/// mean-bias ordering claim.
pub fn random_shifted_instance(rng: &mut RngStream) -> Result<Instance> {
    let gamma = rng.uniform_range(0.5, 0.99);
    let mut support: Vec<TabularMdp> = (0..3)
        .map(|_| TabularMdp::random(3, 2, gamma, rng))
        .collect();
    let policy = support[0].policy.clone();
    for m in support.iter_mut() {
        m.policy = policy.clone();
    }
    let belief = MdpBelief {
        support,
        probs: vec![0.4, 0.35, 0.25],
    };
    let field: Vec<f64> = (0..belief.num_pairs())
        .map(|_| rng.uniform_range(0.1, 1.0))
        .collect();
    let posterior = LinearPosterior::shifted_pushforward(&belief.moments()?, &belief.probs, &field);
    Ok(Instance {
        name: "random_shifted",
        belief,
        posterior,
        coupling: Coupling::PerAtom,
    })
}
