//! Save an ensemble mid-training, reload it, and prove the round trip is
//! bit-exact: every network of every head produces identical outputs.

use tdu::agents::{load_ensemble, save_ensemble, Agent, TduConfig, Variant};
use tdu::envs::{DeepSeaEnv, Environment};
use tdu::nn::RngStream;

fn main() {
    let rng = RngStream::new(0);
    let mut env = DeepSeaEnv::new(6, false, &rng.derive("env")).unwrap();
    let cfg = TduConfig {
        exploiters: 3,
        explorers: 3,
        hidden: vec![16],
        min_replay_size: 32,
        ..TduConfig::default()
    };
    let mut agent = Agent::new(cfg, Variant::Tdu, env.obs_dim(), 2, &rng).unwrap();

    for _ in 0..24 {
        agent.begin_episode();
        let mut obs = env.reset();
        loop {
            let a = agent.act(&obs).unwrap();
            let r = env.step(a).unwrap();
            agent
                .observe(&obs, a, r.reward, r.discount, &r.observation)
                .unwrap();
            if r.episode_done {
                break;
            }
            obs = r.observation;
        }
    }
    println!(
        "trained for {} steps, {} optimizer steps on head 0",
        agent.total_steps(),
        agent.ensemble.heads[0].opt_steps
    );

    let dir = std::env::temp_dir().join("tdu-checkpoint-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("ensemble.tduc");
    let mut file = std::fs::File::create(&path).unwrap();
    save_ensemble(&agent.ensemble, &mut file).unwrap();
    drop(file);
    let restored = load_ensemble(&mut std::fs::File::open(&path).unwrap()).unwrap();
    println!("checkpoint written to {}", path.display());

    let probe = env.reset();
    let mut max_gap = 0.0f64;
    for (a, b) in agent.ensemble.heads.iter().zip(restored.heads.iter()) {
        for (na, nb) in [
            (&a.online, &b.online),
            (&a.target, &b.target),
            (&a.prior, &b.prior),
            (&a.prior_target, &b.prior_target),
        ] {
            let qa = na.forward(&probe).unwrap();
            let qb = nb.forward(&probe).unwrap();
            for (x, y) in qa.iter().zip(qb.iter()) {
                max_gap = max_gap.max((x - y).abs());
            }
        }
    }
    println!("max output gap after reload: {max_gap:e}");
    assert_eq!(max_gap, 0.0, "round trip must be bit-exact");
    println!("checkpoint round trip: bit-exact");
}
