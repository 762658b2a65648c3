//! Compares the regularized-critic agent with the variant whose critic ignores
//! the MDP regularizer, over a few seeds on Catch.
//!
//! `cargo run --release --example apmd_comparison -- [seeds] [env_steps]`

use pmdlab::agent::{train_and_evaluate, AgentConfig, TemperatureSchedule};
use pmdlab::env::EnvConfig;
use pmdlab::metrics::normalize_return;

fn main() -> pmdlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(40_960);
    let env = EnvConfig::catch();

    for regularized in [true, false] {
        let config = AgentConfig {
            alpha_schedule: TemperatureSchedule::constant(0.05),
            lambda_schedule: TemperatureSchedule::constant(0.1),
            use_regularized_q: regularized,
            total_env_steps: steps,
            ..AgentConfig::default()
        };
        let mut scores = Vec::new();
        for seed in 0..seeds {
            let run = train_and_evaluate(&config, &env, seed, 10)?;
            let mut norm = 0.0;
            for &r in &run.eval_returns {
                norm += normalize_return(r, env.bounds())?;
            }
            scores.push(norm / run.eval_returns.len() as f64);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        println!(
            "{:<22} mean normalized {:.3}  per seed {:.3?}",
            if regularized {
                "regularized critic"
            } else {
                "unregularized critic"
            },
            mean,
            scores
        );
    }
    Ok(())
}
