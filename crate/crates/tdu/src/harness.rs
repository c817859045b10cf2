//! Run orchestration: single seeded runs, sweep grids with artifact
//! emission, and the closed-form bias verification suite.
//!
//! Everything here is deterministic given the run seed. A run's randomness
//! all descends from one root stream: the environment uses the `"env"`
//! substream and the agent its own named substreams, so two runs with the
//! same spec are bit-identical regardless of worker count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agents::{Agent, TduConfig, Variant};
use crate::bias::constructions::{self, Instance};
use crate::bias::{bellman_residuals, bias_comparison, write_report_csv, MomentReport};
use crate::config::{EnvKind, ExperimentConfig};
use crate::envs::{BinaryTreeEnv, DeepSeaEnv, Environment};
use crate::error::{Error, Result};
use crate::metrics::{
    deep_sea_score, emit_csv, emit_svg_curves_to_path, fmt_f64, sustained_solve_episode,
    CurveOptions, CurveSeries, EpisodeLog, RunLog, RunMetrics,
};
use crate::nn::RngStream;

/// Everything that determines one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub kind: EnvKind,
    pub size: usize,
    pub stochastic: bool,
    pub variant: Variant,
    pub agent: TduConfig,
    pub seed: u64,
    /// Episode budget.
    pub episodes: u64,
    /// End early once the running-average regret crosses the threshold.
    pub stop_on_solve: bool,
    /// End early once the regret has been zero for this many consecutive
    /// episodes (the sustained-solve notion used on Binary Tree); `None`
    /// disables the check.
    pub stop_on_sustained: Option<usize>,
}

/// Compact float for identifiers: `1`, `0.1`, `2.5`.
fn fmt_short(v: f64) -> String {
    let s = format!("{v}");
    s.replace('-', "m")
}

impl RunSpec {
    pub fn env_name(&self) -> String {
        if self.stochastic {
            format!("{}_stoch", self.kind.as_str())
        } else {
            self.kind.as_str().to_string()
        }
    }

    pub fn run_id(&self) -> String {
        format!(
            "{}-n{}-{}-b{}-l{}-s{}",
            self.env_name(),
            self.size,
            self.variant,
            fmt_short(self.agent.beta),
            fmt_short(self.agent.prior_scale),
            self.seed
        )
    }

    fn build_env(&self, rng: &RngStream) -> Result<Box<dyn Environment>> {
        Ok(match self.kind {
            EnvKind::DeepSea => Box::new(DeepSeaEnv::new(self.size, self.stochastic, rng)?),
            EnvKind::BinaryTree => Box::new(BinaryTreeEnv::new(self.size, rng)?),
        })
    }
}

/// Execute one run to completion and return its full log.
pub fn run_single(spec: &RunSpec) -> Result<RunLog> {
    if spec.episodes == 0 {
        return Err(Error::invalid("run needs a nonzero episode budget"));
    }
    let root = RngStream::new(spec.seed);
    let mut env = spec.build_env(&root.derive("env"))?;
    let mut agent = Agent::new(
        spec.agent.clone(),
        spec.variant,
        env.obs_dim(),
        env.num_actions(),
        &root,
    )?;
    let optimal = env.optimal_return();
    let mut metrics = RunMetrics::new();
    let mut episodes = Vec::new();
    for episode in 1..=spec.episodes {
        agent.begin_episode();
        let mut obs = env.reset();
        let mut ret = 0.0;
        let mut length = 0u64;
        loop {
            let action = agent.act(&obs)?;
            let step = env.step(action)?;
            agent.observe(&obs, action, step.reward, step.discount, &step.observation)?;
            ret += step.reward;
            length += 1;
            if step.episode_done {
                break;
            }
            obs = step.observation;
        }
        metrics.update_regret(ret, optimal);
        episodes.push(EpisodeLog {
            episode,
            ret,
            head: agent.active_head(),
            length,
        });
        if spec.stop_on_solve && metrics.solve_episode.is_some() {
            break;
        }
        if let Some(window) = spec.stop_on_sustained {
            if sustained_solve_episode(&metrics.regrets, window).is_some() {
                break;
            }
        }
    }
    Ok(RunLog {
        run_id: spec.run_id(),
        seed: spec.seed,
        env: spec.env_name(),
        size: spec.size,
        beta: spec.agent.beta,
        lambda: spec.agent.prior_scale,
        variant: spec.variant.to_string(),
        episodes,
        metrics,
    })
}

/// Run a batch of specs, optionally on a bounded worker pool. Results come
/// back in spec order and do not depend on the pool size.
pub fn run_batch(specs: &[RunSpec], workers: usize) -> Result<Vec<RunLog>> {
    let run_all = || specs.par_iter().map(run_single).collect::<Result<Vec<_>>>();
    if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        pool.install(run_all)
    } else {
        run_all()
    }
}

/// Expand a config into the full sweep grid, in deterministic order:
/// size-major, then variant, beta, lambda, seed. Empty sweep axes fall back
/// to the base config value.
pub fn sweep_specs(cfg: &ExperimentConfig) -> Result<Vec<RunSpec>> {
    let sizes = if cfg.sweep.sizes.is_empty() {
        vec![cfg.env.size]
    } else {
        cfg.sweep.sizes.clone()
    };
    let betas = if cfg.sweep.betas.is_empty() {
        vec![cfg.agent.beta]
    } else {
        cfg.sweep.betas.clone()
    };
    let lambdas = if cfg.sweep.lambdas.is_empty() {
        vec![cfg.agent.prior_scale]
    } else {
        cfg.sweep.lambdas.clone()
    };
    let variant_names = if cfg.sweep.variants.is_empty() {
        vec![cfg.run.variant.clone()]
    } else {
        cfg.sweep.variants.clone()
    };
    let variants: Vec<Variant> = variant_names
        .iter()
        .map(|v| v.parse())
        .collect::<Result<_>>()?;

    let mut specs = Vec::new();
    for &size in &sizes {
        for &variant in &variants {
            for &beta in &betas {
                for &lambda in &lambdas {
                    for &seed in &cfg.run.seeds {
                        let mut agent = cfg.agent.clone();
                        agent.beta = beta;
                        agent.prior_scale = lambda;
                        specs.push(RunSpec {
                            kind: cfg.env.kind,
                            size,
                            stochastic: cfg.env.stochastic,
                            variant,
                            agent,
                            seed,
                            episodes: cfg.budget_for(size),
                            stop_on_solve: cfg.run.stop_on_solve,
                            stop_on_sustained: None,
                        });
                    }
                }
            }
        }
    }
    Ok(specs)
}

/// One aggregated score: percentage of sizes a setting solved within the
/// `2^N` budget, per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub variant: String,
    pub beta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub score: f64,
}

/// Score a set of runs, grouped by (variant, beta, lambda, seed) across
/// problem sizes.
pub fn score_runs(runs: &[RunLog]) -> Vec<ScoreRow> {
    let mut groups: BTreeMap<(String, u64, u64, u64), Vec<(u32, Option<u64>)>> = BTreeMap::new();
    for run in runs {
        groups
            .entry((
                run.variant.clone(),
                run.beta.to_bits(),
                run.lambda.to_bits(),
                run.seed,
            ))
            .or_default()
            .push((run.size as u32, run.metrics.solve_episode));
    }
    groups
        .into_iter()
        .map(|((variant, beta, lambda, seed), solves)| ScoreRow {
            variant,
            beta: f64::from_bits(beta),
            lambda: f64::from_bits(lambda),
            seed,
            score: deep_sea_score(&solves),
        })
        .collect()
}

/// Artifact paths written by a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepArtifacts {
    pub runs: Vec<RunLog>,
    pub runs_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub score_csv: PathBuf,
    pub curves_svg: PathBuf,
}

fn padded(series: &[f64], len: usize) -> Vec<f64> {
    let mut out = series.to_vec();
    let last = *out.last().unwrap_or(&0.0);
    out.resize(len, last);
    out
}

fn write_summary_csv(runs: &[RunLog], path: &Path) -> Result<()> {
    let mut text = String::from(
        "run_id,seed,env,N_or_L,variant,beta,lambda,episodes_run,solve_episode,final_avg_regret\n",
    );
    for run in runs {
        let solve = run
            .metrics
            .solve_episode
            .map_or_else(|| "unsolved".to_string(), |e| e.to_string());
        let final_avg = run.metrics.avg_regrets.last().copied().unwrap_or(f64::NAN);
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            run.run_id,
            run.seed,
            run.env,
            run.size,
            run.variant,
            fmt_f64(run.beta),
            fmt_f64(run.lambda),
            run.metrics.episodes(),
            solve,
            fmt_f64(final_avg),
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_score_csv(rows: &[ScoreRow], path: &Path) -> Result<()> {
    let mut text = String::from("variant,beta,lambda,seed,score\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.variant,
            fmt_f64(r.beta),
            fmt_f64(r.lambda),
            r.seed,
            fmt_f64(r.score),
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Build one curve series per (size, variant, beta, lambda), seeds pooled,
/// in first-appearance order. Shorter runs are padded with their final
/// average regret so seeds line up.
pub fn curve_series(runs: &[RunLog]) -> Vec<CurveSeries> {
    let mut order: Vec<(usize, String, u64, u64)> = Vec::new();
    let mut grouped: BTreeMap<(usize, String, u64, u64), Vec<&RunLog>> = BTreeMap::new();
    for run in runs {
        let key = (
            run.size,
            run.variant.clone(),
            run.beta.to_bits(),
            run.lambda.to_bits(),
        );
        if !grouped.contains_key(&key) {
            order.push(key.clone());
        }
        grouped.entry(key).or_default().push(run);
    }
    order
        .into_iter()
        .map(|key| {
            let members = &grouped[&key];
            let len = members
                .iter()
                .map(|r| r.metrics.avg_regrets.len())
                .max()
                .unwrap_or(1);
            CurveSeries {
                label: format!(
                    "n{} {} b{} l{}",
                    key.0,
                    key.1,
                    fmt_short(f64::from_bits(key.2)),
                    fmt_short(f64::from_bits(key.3))
                ),
                runs: members
                    .iter()
                    .map(|r| padded(&r.metrics.avg_regrets, len))
                    .collect(),
            }
        })
        .collect()
}

/// Run the sweep grid of a config and write `runs.csv`, `summary.csv`,
/// `score.csv` and `curves.svg` into the resolved output directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepArtifacts> {
    let specs = sweep_specs(cfg)?;
    let runs = run_batch(&specs, cfg.run.workers)?;
    let dir = cfg.resolved_output_dir();
    fs::create_dir_all(&dir)?;

    let runs_csv = dir.join("runs.csv");
    let mut buf = Vec::new();
    emit_csv(&runs, &mut buf)?;
    fs::write(&runs_csv, buf)?;

    let summary_csv = dir.join("summary.csv");
    write_summary_csv(&runs, &summary_csv)?;

    let score_csv = dir.join("score.csv");
    write_score_csv(&score_runs(&runs), &score_csv)?;

    let curves_svg = dir.join("curves.svg");
    let options = CurveOptions {
        title: format!("{} average regret", cfg.env.kind.as_str()),
        ..CurveOptions::default()
    };
    emit_svg_curves_to_path(&curve_series(&runs), &options, &curves_svg)?;

    Ok(SweepArtifacts {
        runs,
        runs_csv,
        summary_csv,
        score_csv,
        curves_svg,
    })
}

/// Outcome of the closed-form bias verification suite.
#[derive(Debug, Clone)]
pub struct BiasSuiteOutcome {
    /// Largest Bellman moment residual of the exact push-forward posterior.
    pub consistency_max_residual: f64,
    /// Smallest mean residual when the posterior's function class is too
    /// narrow; must be bounded away from zero.
    pub narrow_min_residual: f64,
    /// Largest deviation of the four temporal ratios from 1 in the
    /// exchangeable construction.
    pub unit_ratio_max_gap: f64,
    /// Largest gap in `|variance bias of delta| = (gamma-1)^2 |variance bias
    /// of Q|` under unit ratios.
    pub identity_max_gap: f64,
    /// Largest TD-error mean bias on the shifted transition whose mean-bias
    /// ratio is exactly `1/gamma`.
    pub rho_inverse_max_mean_bias: f64,
    /// Random in-window transitions checked / for which the predicted
    /// mean-bias ordering held.
    pub battery_cases: usize,
    pub battery_holds: usize,
    /// Named per-instance reports, for CSV emission.
    pub reports: Vec<(String, MomentReport)>,
}

impl BiasSuiteOutcome {
    pub fn passes(&self) -> bool {
        self.consistency_max_residual <= 1e-10
            && self.narrow_min_residual > 1e-3
            && self.unit_ratio_max_gap <= 1e-10
            && self.identity_max_gap <= 1e-10
            && self.rho_inverse_max_mean_bias <= 1e-10
            && self.battery_cases > 0
            && self.battery_holds == self.battery_cases
    }
}

fn instance_report(instance: &Instance) -> Result<MomentReport> {
    bellman_residuals(&instance.posterior, &instance.belief, instance.coupling)
}

/// Run every canonical construction plus `battery_instances` random
/// in-window instances and aggregate the checks.
pub fn run_bias_suite(seed: u64, battery_instances: usize) -> Result<BiasSuiteOutcome> {
    let gamma = 0.9;
    let mut reports = Vec::new();

    let consistency = constructions::consistency_instance(gamma)?;
    let report = instance_report(&consistency)?;
    let consistency_max_residual = report
        .pairs
        .iter()
        .map(|p| p.mean_residual().abs().max(p.var_residual().abs()))
        .fold(0.0, f64::max);
    reports.push((consistency.name.to_string(), report));

    let narrow = constructions::narrow_posterior_instance(gamma);
    let report = instance_report(&narrow)?;
    let narrow_min_residual = report
        .pairs
        .iter()
        .map(|p| p.mean_residual().abs())
        .fold(f64::INFINITY, f64::min);
    reports.push((narrow.name.to_string(), report));

    let unit = constructions::unit_ratio_instance(gamma)?;
    let report = instance_report(&unit)?;
    let mut unit_ratio_max_gap = 0.0f64;
    let mut identity_max_gap = 0.0f64;
    for t in &report.transitions {
        for ratio in [t.rho, t.phi, t.kappa, t.alpha] {
            let r = ratio.ok_or_else(|| Error::invalid("unit-ratio instance has zero bias"))?;
            unit_ratio_max_gap = unit_ratio_max_gap.max((r - 1.0).abs());
        }
        let want = (gamma - 1.0) * (gamma - 1.0) * t.bias_var_q.abs();
        identity_max_gap = identity_max_gap.max((t.bias_var_delta.abs() - want).abs());
    }
    reports.push((unit.name.to_string(), report));

    let inverse = constructions::inverse_gamma_rho_instance(gamma)?;
    let report = instance_report(&inverse)?;
    let rho_inverse_max_mean_bias = report
        .transitions
        .iter()
        .filter(|t| t.s == 0)
        .map(|t| t.bias_mean_delta.abs())
        .fold(0.0, f64::max);
    reports.push((inverse.name.to_string(), report));

    let mut rng = RngStream::new(seed).derive("bias-battery");
    let mut battery_cases = 0;
    let mut battery_holds = 0;
    for _ in 0..battery_instances {
        let instance = constructions::random_shifted_instance(&mut rng)?;
        let summary = bias_comparison(&instance_report(&instance)?);
        battery_cases += summary.mean_condition_cases;
        battery_holds += summary.mean_ordering_holds;
    }

    Ok(BiasSuiteOutcome {
        consistency_max_residual,
        narrow_min_residual,
        unit_ratio_max_gap,
        identity_max_gap,
        rho_inverse_max_mean_bias,
        battery_cases,
        battery_holds,
        reports,
    })
}

/// Write per-instance CSV reports and a pass/fail summary under `dir`.
pub fn write_bias_outputs(outcome: &BiasSuiteOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, report) in &outcome.reports {
        let mut pairs = Vec::new();
        let mut transitions = Vec::new();
        write_report_csv(report, &mut pairs, &mut transitions)?;
        fs::write(dir.join(format!("{name}_pairs.csv")), pairs)?;
        fs::write(dir.join(format!("{name}_transitions.csv")), transitions)?;
    }
    let text = format!(
        "consistency_max_residual,{}\nnarrow_min_residual,{}\nunit_ratio_max_gap,{}\n\
         identity_max_gap,{}\nrho_inverse_max_mean_bias,{}\nbattery_holds,{}/{}\nverdict,{}\n",
        fmt_f64(outcome.consistency_max_residual),
        fmt_f64(outcome.narrow_min_residual),
        fmt_f64(outcome.unit_ratio_max_gap),
        fmt_f64(outcome.identity_max_gap),
        fmt_f64(outcome.rho_inverse_max_mean_bias),
        outcome.battery_holds,
        outcome.battery_cases,
        if outcome.passes() { "pass" } else { "fail" },
    );
    fs::write(dir.join("summary.csv"), text)?;
    Ok(())
}
