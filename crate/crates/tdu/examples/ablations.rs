//! Every algorithm variant on one Deep Sea instance.
//!
//! Compares the full method against its ablations and baselines: no
//! intrinsic reward (bdqn), Q-value spread instead of TD-error spread (qu),
//! spread as an acting bonus only (q_ucb), single-network absolute TD-error
//! (qex), count-based bonus (cts), and UCB1 head selection (tdu_bandit).

use tdu::agents::{TduConfig, Variant};
use tdu::config::EnvKind;
use tdu::harness::{run_batch, RunSpec};

fn main() {
    let size = 6;
    let seeds = [0u64, 1];
    let specs: Vec<RunSpec> = Variant::ALL
        .into_iter()
        .flat_map(|variant| {
            seeds.iter().map(move |&seed| RunSpec {
                kind: EnvKind::DeepSea,
                size,
                stochastic: false,
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
    println!(
        "deep sea N={size}, budget {} episodes, {} seeds",
        1 << size,
        seeds.len()
    );
    println!("{:<11} {:>8} {:>18}", "variant", "solved", "solve episodes");
    for variant in Variant::ALL {
        let group: Vec<_> = logs
            .iter()
            .filter(|l| l.variant == variant.as_str())
            .collect();
        let solved = group
            .iter()
            .filter(|l| l.metrics.solve_episode.is_some())
            .count();
        let episodes: Vec<String> = group
            .iter()
            .map(|l| {
                l.metrics
                    .solve_episode
                    .map_or_else(|| "-".to_string(), |e| e.to_string())
            })
            .collect();
        println!(
            "{:<11} {:>5}/{} {:>18}",
            variant.as_str(),
            solved,
            group.len(),
            episodes.join(" ")
        );
    }
}
