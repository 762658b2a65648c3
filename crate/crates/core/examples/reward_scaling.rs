//! Scans the MDP temperature on Catch at several reward scales and fits the
//! smallest successful temperature against the maximum return.
//!
//! `cargo run --release --example reward_scaling -- [env_steps]`

use pmdlab::agent::{train_and_evaluate, AgentConfig, TemperatureSchedule};
use pmdlab::env::EnvConfig;
use pmdlab::metrics::{linear_fit, normalize_return};

const ALPHAS: [f64; 6] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5];

fn main() -> pmdlab::Result<()> {
    let steps: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(40_960);
    let mut points = Vec::new();
    for scale in [0.5, 1.0, 2.0, 4.0] {
        let env = EnvConfig::catch().with_reward_scale(scale);
        let mut found = None;
        for &alpha in &ALPHAS {
            let config = AgentConfig {
                alpha_schedule: TemperatureSchedule::constant(alpha),
                lambda_schedule: TemperatureSchedule::constant(1e-3),
                total_env_steps: steps,
                ..AgentConfig::default()
            };
            let run = train_and_evaluate(&config, &env, 11, 10)?;
            let mut norm = 0.0;
            for &r in &run.eval_returns {
                norm += normalize_return(r, env.bounds())?;
            }
            norm /= run.eval_returns.len() as f64;
            println!("{:<12} alpha {:<6} normalized {:.3}", env.id(), alpha, norm);
            if norm >= 0.85 {
                found = Some(alpha);
                break;
            }
        }
        match found {
            Some(a) => points.push((env.bounds().r_max, a)),
            None => println!("{:<12} no alpha reached 0.85", env.id()),
        }
    }
    println!("points {points:?}");
    match linear_fit(&points) {
        Ok(fit) => println!(
            "min alpha ~ {:.5} * max_return + {:.5}",
            fit.slope, fit.intercept
        ),
        Err(e) => println!("no fit: {e}"),
    }
    Ok(())
}
