//! Trains on Catch with the MDP temperature learned against a target entropy level
//! and prints how the temperature evolves.
//!
//! `cargo run --release --example learned_alpha -- [target_weight] [env_steps]`

use pmdlab::agent::{Agent, AgentConfig, ScheduleMode, TemperatureSchedule};
use pmdlab::env::EnvConfig;

fn main() -> pmdlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let weight: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(51_200);

    let config = AgentConfig {
        alpha_schedule: TemperatureSchedule::from_mode(ScheduleMode::LearnedConstant, weight),
        lambda_schedule: TemperatureSchedule::constant(0.1),
        total_env_steps: steps,
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(config, EnvConfig::catch(), 3)?;
    println!("entropy target {:.4}", agent.h_target().unwrap_or(f64::NAN));
    let iterations = agent.config().iterations();
    for _ in 0..iterations {
        let log = agent.train_iteration()?;
        if log.iteration % 20 == 0 || log.iteration == iterations {
            println!(
                "iter {:4} alpha {:.5} alpha loss {:+.5} return {}",
                log.iteration,
                log.alpha,
                log.alpha_loss.unwrap_or(f64::NAN),
                log.mean_return.map_or("-".into(), |r| format!("{r:+.2}"))
            );
        }
    }
    Ok(())
}
