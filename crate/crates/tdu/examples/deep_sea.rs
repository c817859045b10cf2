//! Train the full TDU agent on deterministic Deep Sea.
//!
//! Usage: `cargo run --release --example deep_sea [SIZE] [SEED]`
//! (defaults: size 8, seed 0). The episode budget is `2^SIZE`; the run stops
//! as soon as the running-average regret falls below the solve threshold.

use tdu::agents::{TduConfig, Variant};
use tdu::config::EnvKind;
use tdu::harness::{run_single, RunSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let size: usize = args
        .next()
        .map_or(8, |a| a.parse().expect("SIZE must be an integer"));
    let seed: u64 = args
        .next()
        .map_or(0, |a| a.parse().expect("SEED must be an integer"));

    let spec = RunSpec {
        kind: EnvKind::DeepSea,
        size,
        stochastic: false,
        variant: Variant::Tdu,
        agent: TduConfig::default(),
        seed,
        episodes: 1u64 << size.min(20),
        stop_on_solve: true,
        stop_on_sustained: None,
    };
    println!("{}: budget {} episodes", spec.run_id(), spec.episodes);

    let log = run_single(&spec).unwrap();
    for ep in log.episodes.iter().step_by(32.max(1)) {
        println!(
            "episode {:5}  head {:2}  return {:+.3}  avg regret {:.4}",
            ep.episode,
            ep.head,
            ep.ret,
            log.metrics.avg_regrets[ep.episode as usize - 1]
        );
    }
    match log.metrics.solve_episode {
        Some(e) => println!("solved at episode {e} of {} budgeted", spec.episodes),
        None => println!("not solved within {} episodes", log.metrics.episodes()),
    }
}
