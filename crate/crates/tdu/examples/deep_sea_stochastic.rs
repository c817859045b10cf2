//! TDU versus plain bootstrapped DQN on stochastic Deep Sea.
//!
//! Executed moves are inverted with probability `1/N`, so returns are noisy
//! and the optimal return is computed by value iteration over the flip
//! kernel. Three seeds per method on N = 6.

use tdu::agents::{TduConfig, Variant};
use tdu::config::EnvKind;
use tdu::harness::{run_batch, RunSpec};

fn main() {
    let size = 6;
    let seeds = [0u64, 1, 2];
    let specs: Vec<RunSpec> = [Variant::Tdu, Variant::Bdqn]
        .into_iter()
        .flat_map(|variant| {
            seeds.iter().map(move |&seed| RunSpec {
                kind: EnvKind::DeepSea,
                size,
                stochastic: true,
                variant,
                agent: TduConfig::default(),
                seed,
                episodes: 1 << size,
                stop_on_solve: true,
                stop_on_sustained: None,
            })
        })
        .collect();

    let logs = run_batch(&specs, 0).unwrap();
    for variant in ["tdu", "bdqn"] {
        let group: Vec<_> = logs.iter().filter(|l| l.variant == variant).collect();
        let solved = group
            .iter()
            .filter(|l| l.metrics.solve_episode.is_some())
            .count();
        print!(
            "{variant:5}: {solved}/{} seeds solved; episodes:",
            group.len()
        );
        for log in &group {
            match log.metrics.solve_episode {
                Some(e) => print!(" {e}"),
                None => print!(" -"),
            }
        }
        println!();
    }
}
