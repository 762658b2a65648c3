//! Trains one agent on CartPole and reports evaluation returns.
//!
//! `cargo run --release --example train_single -- [seed] [env_steps]`

use std::time::Instant;

use pmdlab::agent::{train_and_evaluate, AgentConfig, TemperatureSchedule};
use pmdlab::env::EnvConfig;
use pmdlab::metrics::normalize_return;
use pmdlab::regularizers::{DriftSpec, RegularizerSpec};

fn main() -> pmdlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(200_000);

    let config = AgentConfig {
        regularizer: RegularizerSpec::NegShannon,
        drift: DriftSpec::ReverseKL,
        alpha_schedule: TemperatureSchedule::constant(0.01),
        lambda_schedule: TemperatureSchedule::constant(0.1),
        total_env_steps: steps,
        ..AgentConfig::default()
    };
    let env = EnvConfig::cartpole();
    let start = Instant::now();
    let run = train_and_evaluate(&config, &env, seed, 10)?;
    for log in run.logs.iter().filter(|l| l.iteration % 50 == 0) {
        println!(
            "iter {:4} steps {:7} return {:>8} actor {:+.4} critic {:.4}",
            log.iteration,
            log.env_steps,
            log.mean_return.map_or("-".into(), |r| format!("{r:.1}")),
            log.actor_loss,
            log.critic_loss
        );
    }
    let bounds = env.bounds();
    let norm: f64 = run
        .eval_returns
        .iter()
        .map(|&r| normalize_return(r, bounds))
        .collect::<pmdlab::Result<Vec<_>>>()?
        .iter()
        .sum::<f64>()
        / run.eval_returns.len() as f64;
    println!("eval returns {:?}", run.eval_returns);
    println!(
        "normalized {norm:.3} in {:.1}s",
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
