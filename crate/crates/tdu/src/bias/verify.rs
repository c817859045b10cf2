//! Posterior moment propagation, Bellman-consistency residuals, and the
//! estimator-bias comparisons for TD-error versus value uncertainty.
//!
//! The verifier is exact: beliefs have finite support, posteriors are finite
//! weight sets or Gaussians over linear features, and every moment is
//! computed in closed form, so residuals measure theory, not sampling noise.

use std::io::Write;

use nalgebra::DMatrix;

use crate::bias::mdp::{BeliefMoments, MdpBelief};
use crate::error::{Error, Result};
use crate::nn::RngStream;

/// Distribution over the linear weights `w` of `Q_w = w . phi(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightDist {
    /// Finite support: member weight vectors with probabilities.
    Finite {
        members: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
    /// Gaussian with given mean and covariance (row-major `n x n`).
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

/// A posterior over Q-functions that are linear in a fixed feature map.
///
/// With one-hot features per (s, a) this is a full tabular posterior (the
/// push-forward of a belief); with fewer features than state-action pairs it
/// is the final-layer-only family the function-approximation bias theorem
/// speaks about.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPosterior {
    /// `features[s * A + a]`, each of length `n`.
    pub features: Vec<Vec<f64>>,
    pub weights: WeightDist,
}

/// How the Bellman right-hand side marginalises over `(r, s')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// Posterior atom `i` is the push-forward of belief atom `i`; the inner
    /// expectation uses atom `i`'s own reward and kernel.
    PerAtom,
    /// Posterior and belief are independent; the inner expectation uses the
    /// belief-mixture reward and kernel.
    Mixture,
}

impl LinearPosterior {
    /// Full tabular push-forward of a belief: one-hot features, one weight
    /// vector per belief atom equal to that atom's exact Q table.
    pub fn pushforward(belief_moments: &BeliefMoments, probs: &[f64]) -> Self {
        let n = belief_moments.mean.len();
        let features = (0..n)
            .map(|i| {
                let mut f = vec![0.0; n];
                f[i] = 1.0;
                f
            })
            .collect();
        LinearPosterior {
            features,
            weights: WeightDist::Finite {
                members: belief_moments.q_tables.clone(),
                probs: probs.to_vec(),
            },
        }
    }

    /// Push-forward shifted by an additive bias field per (s, a), which makes
    /// `Bias(E_theta[Q])` exactly the field while preserving coupling.
    pub fn shifted_pushforward(
        belief_moments: &BeliefMoments,
        probs: &[f64],
        bias_field: &[f64],
    ) -> Self {
        let mut p = LinearPosterior::pushforward(belief_moments, probs);
        if let WeightDist::Finite { members, .. } = &mut p.weights {
            for w in members.iter_mut() {
                for (w, &b) in w.iter_mut().zip(bias_field.iter()) {
                    *w += b;
                }
            }
        }
        p
    }

    pub fn num_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn validate(&self, num_pairs: usize) -> Result<()> {
        if self.features.len() != num_pairs {
            return Err(Error::invalid(
                "feature map does not cover all (s, a) pairs",
            ));
        }
        let n = self.num_features();
        if self.features.iter().any(|f| f.len() != n) {
            return Err(Error::invalid("feature vectors have inconsistent lengths"));
        }
        match &self.weights {
            WeightDist::Finite { members, probs } => {
                if members.is_empty() || members.len() != probs.len() {
                    return Err(Error::invalid("finite weight support/probability mismatch"));
                }
                if members.iter().any(|w| w.len() != n) {
                    return Err(Error::invalid("weight vector length mismatch"));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || probs.iter().any(|&p| p < 0.0) {
                    return Err(Error::invalid(
                        "weight probabilities must be a distribution",
                    ));
                }
            }
            WeightDist::Gaussian { mean, cov } => {
                if mean.len() != n || cov.len() != n || cov.iter().any(|r| r.len() != n) {
                    return Err(Error::invalid("Gaussian moment shape mismatch"));
                }
            }
        }
        Ok(())
    }

    /// `E_theta[Q(sa)]`.
    pub fn mean_q(&self, sa: usize) -> f64 {
        let phi = &self.features[sa];
        match &self.weights {
            WeightDist::Finite { members, probs } => members
                .iter()
                .zip(probs.iter())
                .map(|(w, &p)| p * dot(w, phi))
                .sum(),
            WeightDist::Gaussian { mean, .. } => dot(mean, phi),
        }
    }

    /// `E_theta[Q(sa1) * Q(sa2)]`; `sa1 == sa2` gives the second moment.
    pub fn cross_moment(&self, sa1: usize, sa2: usize) -> f64 {
        let (p1, p2) = (&self.features[sa1], &self.features[sa2]);
        match &self.weights {
            WeightDist::Finite { members, probs } => members
                .iter()
                .zip(probs.iter())
                .map(|(w, &p)| p * dot(w, p1) * dot(w, p2))
                .sum(),
            WeightDist::Gaussian { mean, cov } => {
                let mut quad = 0.0;
                for (i, row) in cov.iter().enumerate() {
                    for (j, &c) in row.iter().enumerate() {
                        quad += p1[i] * c * p2[j];
                    }
                }
                quad + dot(mean, p1) * dot(mean, p2)
            }
        }
    }

    /// `V_theta[Q(sa)]`.
    pub fn var_q(&self, sa: usize) -> f64 {
        let m = self.mean_q(sa);
        self.cross_moment(sa, sa) - m * m
    }

    /// One reproducible weight draw (Cholesky transform for the Gaussian).
    pub fn sample_weight(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        match &self.weights {
            WeightDist::Finite { members, probs } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for (w, &p) in members.iter().zip(probs.iter()) {
                    acc += p;
                    if u < acc {
                        return Ok(w.clone());
                    }
                }
                Ok(members.last().expect("validated nonempty").clone())
            }
            WeightDist::Gaussian { mean, cov } => {
                let n = mean.len();
                let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
                let chol = m
                    .cholesky()
                    .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
                let l = chol.l();
                let z: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
                let mut out = mean.clone();
                for i in 0..n {
                    for j in 0..=i {
                        out[i] += l[(i, j)] * z[j];
                    }
                }
                Ok(out)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Per-(s, a) Bellman moment consistency and estimator biases.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub s: usize,
    pub a: usize,
    /// Mean Bellman equation, left and right side.
    pub eq_mean_lhs: f64,
    pub eq_mean_rhs: f64,
    /// Variance Bellman equation, left and right side.
    pub eq_var_lhs: f64,
    pub eq_var_rhs: f64,
    /// `B(s, a)`: bias of the posterior mean against the belief mean.
    pub bias_mean: f64,
    /// Bias of the posterior variance against the belief variance.
    pub bias_var: f64,
}

impl PairReport {
    pub fn mean_residual(&self) -> f64 {
        self.eq_mean_lhs - self.eq_mean_rhs
    }

    pub fn var_residual(&self) -> f64 {
        self.eq_var_lhs - self.eq_var_rhs
    }
}

/// Per-transition bias structure: the temporal-consistency ratios and the
/// biases of the TD-error moments versus the value moments.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionReport {
    pub s: usize,
    pub a: usize,
    pub next: usize,
    /// Ratios; `None` when the corresponding denominator is exactly zero.
    pub rho: Option<f64>,
    pub phi: Option<f64>,
    pub kappa: Option<f64>,
    pub alpha: Option<f64>,
    pub bias_mean_q: f64,
    pub bias_mean_delta: f64,
    pub bias_var_q: f64,
    pub bias_var_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub gamma: f64,
    pub pairs: Vec<PairReport>,
    pub transitions: Vec<TransitionReport>,
}

/// Compute the full moment report of a posterior against a belief.
///
/// The Bellman right-hand sides marginalise `(r, s')` per `coupling`; the
/// biases and ratios do not involve the kernel at all — they compare
/// posterior moments with belief moments at the endpoints of each
/// transition reachable under the mixture kernel.
pub fn bellman_residuals(
    posterior: &LinearPosterior,
    belief: &MdpBelief,
    coupling: Coupling,
) -> Result<MomentReport> {
    belief.validate()?;
    let bm = belief.moments()?;
    let n = belief.num_pairs();
    posterior.validate(n)?;
    let gamma = belief.gamma();
    let num_states = belief.support[0].num_states;
    let num_actions = belief.support[0].num_actions;
    let policy = &belief.support[0].policy;

    if coupling == Coupling::PerAtom {
        match &posterior.weights {
            WeightDist::Finite { members, probs } => {
                if members.len() != belief.support.len() || probs != &belief.probs {
                    return Err(Error::invalid(
                        "per-atom coupling needs one posterior member per belief atom \
                         with matching probabilities",
                    ));
                }
            }
            WeightDist::Gaussian { .. } => {
                return Err(Error::invalid(
                    "per-atom coupling requires a finite posterior",
                ))
            }
        }
    }

    let mean_reward = belief.mean_reward();
    let mean_kernel = belief.mean_transition();

    let mut pairs = Vec::with_capacity(n);
    for s in 0..num_states {
        for a in 0..num_actions {
            let sa = s * num_actions + a;
            let lhs_mean = posterior.mean_q(sa);
            let lhs_var = posterior.var_q(sa);
            let (rhs_mean, rhs_var) = match coupling {
                Coupling::Mixture => {
                    // y(theta) = r_bar + gamma * sum_s' P_bar Q_theta(s', pi)
                    let mut ey = mean_reward[sa];
                    let mut var = 0.0;
                    for s1 in 0..num_states {
                        let p1 = mean_kernel[sa * num_states + s1];
                        if p1 == 0.0 {
                            continue;
                        }
                        let sa1 = s1 * num_actions + policy[s1];
                        ey += gamma * p1 * posterior.mean_q(sa1);
                        for s2 in 0..num_states {
                            let p2 = mean_kernel[sa * num_states + s2];
                            if p2 == 0.0 {
                                continue;
                            }
                            let sa2 = s2 * num_actions + policy[s2];
                            let cov = posterior.cross_moment(sa1, sa2)
                                - posterior.mean_q(sa1) * posterior.mean_q(sa2);
                            var += p1 * p2 * cov;
                        }
                    }
                    (ey, gamma * gamma * var)
                }
                Coupling::PerAtom => {
                    // g_i = r_i + gamma * sum_s' P_i(s'|sa) Q_{w_i}(s', pi)
                    let WeightDist::Finite { members, probs } = &posterior.weights else {
                        unreachable!("checked above");
                    };
                    let mut ey = 0.0;
                    let mut ey2 = 0.0;
                    for ((w, &p), m) in members.iter().zip(probs.iter()).zip(belief.support.iter())
                    {
                        let mut g = m.reward[sa];
                        for s1 in 0..num_states {
                            let pr = m.prob(s, a, s1);
                            if pr != 0.0 {
                                let sa1 = s1 * num_actions + policy[s1];
                                g += gamma * pr * dot(w, &posterior.features[sa1]);
                            }
                        }
                        ey += p * g;
                        ey2 += p * g * g;
                    }
                    (ey, ey2 - ey * ey)
                }
            };
            pairs.push(PairReport {
                s,
                a,
                eq_mean_lhs: lhs_mean,
                eq_mean_rhs: rhs_mean,
                eq_var_lhs: lhs_var,
                eq_var_rhs: rhs_var,
                bias_mean: lhs_mean - bm.mean[sa],
                bias_var: lhs_var - bm.var[sa],
            });
        }
    }

    let mut transitions = Vec::new();
    for s in 0..num_states {
        for a in 0..num_actions {
            let sa = s * num_actions + a;
            for next in 0..num_states {
                if mean_kernel[sa * num_states + next] == 0.0 {
                    continue;
                }
                let sa2 = next * num_actions + policy[next];
                let b = pairs[sa].bias_mean;
                let b2 = pairs[sa2].bias_mean;
                let c = posterior.cross_moment(sa, sa) - bm.second[sa];
                let c2 = posterior.cross_moment(sa2, sa2) - bm.second[sa2];
                // Belief cross moment E_M[Q'(s',pi) Q(s,a)].
                let mut belief_cross = 0.0;
                for (q, &p) in bm.q_tables.iter().zip(belief.probs.iter()) {
                    belief_cross += p * q[sa2] * q[sa];
                }
                let d = posterior.cross_moment(sa2, sa) - belief_cross;

                // V_theta[delta | tau] with delta = gamma Q' + r - Q; the
                // reward is fixed by conditioning and cancels.
                let em = posterior.mean_q(sa);
                let em2 = posterior.mean_q(sa2);
                let var_delta_post = gamma * gamma * posterior.cross_moment(sa2, sa2)
                    - 2.0 * gamma * posterior.cross_moment(sa2, sa)
                    + posterior.cross_moment(sa, sa)
                    - (gamma * em2 - em).powi(2);
                // Belief counterpart from the per-atom exact Q tables.
                let mut e_d = 0.0;
                let mut e_d2 = 0.0;
                for (q, &p) in bm.q_tables.iter().zip(belief.probs.iter()) {
                    let dl = gamma * q[sa2] - q[sa];
                    e_d += p * dl;
                    e_d2 += p * dl * dl;
                }
                let var_delta_belief = e_d2 - e_d * e_d;

                let ratio = |num: f64, den: f64| (den != 0.0).then(|| num / den);
                transitions.push(TransitionReport {
                    s,
                    a,
                    next,
                    rho: ratio(b2, b),
                    phi: ratio(c2, c),
                    kappa: ratio(d, c),
                    alpha: ratio(bm.mean[sa2], bm.mean[sa]),
                    bias_mean_q: b,
                    bias_mean_delta: gamma * b2 - b,
                    bias_var_q: pairs[sa].bias_var,
                    bias_var_delta: var_delta_post - var_delta_belief,
                });
            }
        }
    }

    Ok(MomentReport {
        gamma,
        pairs,
        transitions,
    })
}

/// Aggregate check of the sufficiency conditions against observed orderings.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSummary {
    pub transitions: usize,
    /// Transitions with `rho` strictly inside `(0, 2/gamma)`.
    pub mean_condition_cases: usize,
    /// ... of which `|Bias(E[delta|tau])| < |Bias(E[Q])|` held.
    pub mean_ordering_holds: usize,
    /// Transitions where all second-moment windows hold strictly.
    pub var_condition_cases: usize,
    /// ... of which `|Bias(V[delta|tau])| < |Bias(V[Q])|` held.
    pub var_ordering_holds: usize,
    /// Transitions where some ratio sits exactly on a window boundary.
    pub boundary_cases: usize,
}

/// Evaluate the sufficiency conditions of the bias theorem on a report.
///
/// Ratios reported as undefined (zero denominator) are excluded; boundary
/// values are counted separately and not claimed either way, since the
/// theorem's windows are open intervals.
pub fn bias_comparison(report: &MomentReport) -> BiasSummary {
    let gamma = report.gamma;
    let hi = 2.0 / gamma;
    let mut out = BiasSummary {
        transitions: report.transitions.len(),
        mean_condition_cases: 0,
        mean_ordering_holds: 0,
        var_condition_cases: 0,
        var_ordering_holds: 0,
        boundary_cases: 0,
    };
    for t in &report.transitions {
        let mut boundary = false;
        let mut in_open = |v: Option<f64>, lo: f64, hi: f64| -> bool {
            match v {
                Some(v) if v == lo || v == hi => {
                    boundary = true;
                    false
                }
                Some(v) => lo < v && v < hi,
                None => false,
            }
        };
        let mean_ok = in_open(t.rho, 0.0, hi);
        if mean_ok {
            out.mean_condition_cases += 1;
            if t.bias_mean_delta.abs() < t.bias_mean_q.abs() {
                out.mean_ordering_holds += 1;
            }
        }
        let var_ok = mean_ok
            && in_open(t.alpha, 0.0, hi)
            && in_open(t.kappa, 0.0, hi)
            && t.kappa
                .is_some_and(|k| in_open(t.phi, 1.0 - 2.0 * gamma * k, hi * hi));
        if var_ok {
            out.var_condition_cases += 1;
            if t.bias_var_delta.abs() < t.bias_var_q.abs() {
                out.var_ordering_holds += 1;
            }
        }
        if boundary {
            out.boundary_cases += 1;
        }
    }
    out
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), fmt)
}

/// Emit the report as two CSV tables: one row per (s, a), one per
/// transition. Floats carry 17 significant digits.
pub fn write_report_csv(
    report: &MomentReport,
    pairs_out: &mut impl Write,
    transitions_out: &mut impl Write,
) -> Result<()> {
    writeln!(
        pairs_out,
        "s,a,eq_mean_lhs,eq_mean_rhs,eq_mean_residual,eq_var_lhs,eq_var_rhs,\
         eq_var_residual,bias_mean,bias_var"
    )?;
    for p in &report.pairs {
        writeln!(
            pairs_out,
            "{},{},{},{},{},{},{},{},{},{}",
            p.s,
            p.a,
            fmt(p.eq_mean_lhs),
            fmt(p.eq_mean_rhs),
            fmt(p.mean_residual()),
            fmt(p.eq_var_lhs),
            fmt(p.eq_var_rhs),
            fmt(p.var_residual()),
            fmt(p.bias_mean),
            fmt(p.bias_var),
        )?;
    }
    writeln!(
        transitions_out,
        "s,a,next,rho,phi,kappa,alpha,bias_mean_q,bias_mean_delta,bias_var_q,bias_var_delta"
    )?;
    for t in &report.transitions {
        writeln!(
            transitions_out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            t.s,
            t.a,
            t.next,
            fmt_opt(t.rho),
            fmt_opt(t.phi),
            fmt_opt(t.kappa),
            fmt_opt(t.alpha),
            fmt(t.bias_mean_q),
            fmt(t.bias_mean_delta),
            fmt(t.bias_var_q),
            fmt(t.bias_var_delta),
        )?;
    }
    Ok(())
}
