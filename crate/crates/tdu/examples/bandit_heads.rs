//! Head-selection statistics: uniform sampling versus the UCB1 bandit.
//!
//! With uniform selection every head acts in roughly `1/(K+N)` of episodes.
//! The bandit variant scores heads by their accumulated step reward and
//! shifts episodes toward the heads that have been earning more.

use tdu::agents::{TduConfig, Variant};
use tdu::config::EnvKind;
use tdu::harness::{run_single, RunSpec};
use tdu::metrics::RunLog;

fn histogram(log: &RunLog, heads: usize) -> Vec<usize> {
    let mut counts = vec![0usize; heads];
    for ep in &log.episodes {
        counts[ep.head] += 1;
    }
    counts
}

fn main() {
    let agent = TduConfig {
        exploiters: 4,
        explorers: 4,
        ..TduConfig::default()
    };
    let heads = agent.ensemble_total();
    let base = RunSpec {
        kind: EnvKind::DeepSea,
        size: 6,
        stochastic: false,
        variant: Variant::Tdu,
        agent,
        seed: 0,
        episodes: 64,
        stop_on_solve: false,
        stop_on_sustained: None,
    };
    let mut bandit = base.clone();
    bandit.variant = Variant::TduBandit;

    let uniform_log = run_single(&base).unwrap();
    let bandit_log = run_single(&bandit).unwrap();

    println!("episodes per head over {} episodes:", base.episodes);
    println!(
        "head:        {}",
        (0..heads).map(|h| format!("{h:4}")).collect::<String>()
    );
    for (name, log) in [("uniform", &uniform_log), ("ucb1", &bandit_log)] {
        let counts = histogram(log, heads);
        println!(
            "{name:<8}     {}",
            counts.iter().map(|c| format!("{c:4}")).collect::<String>()
        );
    }
    println!(
        "uniform solve: {:?}, bandit solve: {:?}",
        uniform_log.metrics.solve_episode, bandit_log.metrics.solve_episode
    );
}
