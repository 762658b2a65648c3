//! Rolls out a uniformly random policy in each environment and compares the
//! returns with the bounds used for normalization.
//!
//! `cargo run --release --example env_rollout -- [episodes]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pmdlab::env::EnvConfig;
use pmdlab::metrics::normalize_return;

fn main() -> pmdlab::Result<()> {
    let episodes: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut envs = EnvConfig::standard_suite();
    envs.extend(EnvConfig::upscaled_catch_suite());
    for env in envs {
        let mut returns = Vec::with_capacity(episodes);
        let mut lengths = 0;
        for _ in 0..episodes {
            let (mut state, _) = env.reset(rng.gen())?;
            let mut total = 0.0;
            while !state.is_done() {
                let action = rng.gen_range(0..env.action_count());
                let (next, step) = env.step(&state, action)?;
                total += step.reward;
                state = next;
            }
            lengths += state.step_count();
            returns.push(total);
        }
        let mean = returns.iter().sum::<f64>() / episodes as f64;
        let b = env.bounds();
        println!(
            "{:<14} obs {:>3} actions {} | mean return {:>8.2} in [{}, {}] | normalized {:.3} | mean length {:.1}",
            env.id(),
            env.obs_dim(),
            env.action_count(),
            mean,
            b.r_min,
            b.r_max,
            normalize_return(mean, b)?,
            lengths as f64 / episodes as f64
        );
    }
    Ok(())
}
