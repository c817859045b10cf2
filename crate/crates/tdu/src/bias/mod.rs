//! Exact verifier for the uncertainty-propagation theory.
//!
//! Builds small enumerable MDPs with an explicit finite belief, propagates
//! posterior moments in closed form, and measures (a) Bellman-consistency
//! residuals of the posterior mean and variance, (b) biases of TD-error
//! moments versus value moments per transition, and (c) the temporal
//! ratio conditions under which the TD-error estimators provably carry less
//! bias.

pub mod constructions;
mod mdp;
mod verify;

pub use mdp::{BeliefMoments, MdpBelief, TabularMdp};
pub use verify::{
    bellman_residuals, bias_comparison, write_report_csv, BiasSummary, Coupling, LinearPosterior,
    MomentReport, PairReport, TransitionReport, WeightDist,
};
