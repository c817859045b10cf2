//! Intrinsic-reward scale sweep on the Binary Tree chain.
//!
//! One leaf of a depth-L tree pays reward 1 and every other transition pays
//! 0, so undirected exploration stalls. Here a run counts as solved when the
//! optimal policy is found and then retained for 100 consecutive episodes,
//! which is a stricter bar than the regret threshold.

use tdu::agents::{TduConfig, Variant};
use tdu::config::EnvKind;
use tdu::harness::{run_batch, RunSpec};
use tdu::metrics::sustained_solve_episode;

fn main() {
    let depth = 10;
    let budget = 1500;
    let window = 100;
    let betas = [0.0, 0.1, 1.0];

    let specs: Vec<RunSpec> = betas
        .iter()
        .map(|&beta| RunSpec {
            kind: EnvKind::BinaryTree,
            size: depth,
            stochastic: false,
            variant: Variant::Tdu,
            agent: TduConfig {
                beta,
                ..TduConfig::default()
            },
            seed: 0,
            episodes: budget,
            stop_on_solve: false, // keep running to observe retention
            stop_on_sustained: None,
        })
        .collect();

    let logs = run_batch(&specs, 0).unwrap();
    println!("depth {depth}, budget {budget} episodes, retention window {window}");
    for (spec, log) in specs.iter().zip(logs.iter()) {
        let sustained = sustained_solve_episode(&log.metrics.regrets, window);
        let hits = log
            .metrics
            .regrets
            .iter()
            .filter(|&&r| r.abs() <= 1e-9)
            .count();
        print!(
            "beta {:>4}: rewarding episodes {:4}/{}  ",
            spec.agent.beta,
            hits,
            log.metrics.episodes()
        );
        match sustained {
            Some(e) => println!("optimal policy held from episode {e}"),
            None => println!("never held for {window} consecutive episodes"),
        }
    }
}
