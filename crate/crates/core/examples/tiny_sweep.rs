//! Runs a small temperature sweep on Catch and DeepSea, then prints the heat map
//! and robustness reports built from the store.
//!
//! `cargo run --release --example tiny_sweep -- [store_dir] [env_steps]`
//!
//! Re-running with the same directory resumes the sweep and skips finished runs.

use std::path::PathBuf;

use pmdlab::env::EnvConfig;
use pmdlab::harness::{
    emit_heatmap, emit_robustness, run_sweep, SweepOptions, SweepResults, SweepSpec,
};
use pmdlab::regularizers::{DriftSpec, RegularizerSpec};

fn main() -> pmdlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pmdlab-tiny-sweep"));
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_480);

    let mut spec = SweepSpec::desk("tiny", RegularizerSpec::NegShannon, DriftSpec::ReverseKL);
    spec.alpha_grid = vec![0.0, 0.01, 0.1];
    spec.lambda_grid = vec![0.0, 0.1, 1.0];
    spec.envs = vec![EnvConfig::catch(), EnvConfig::deep_sea()];
    spec.seeds_per_config = 2;
    spec.agent.total_env_steps = Some(steps);

    let summary = run_sweep(
        &spec,
        &dir,
        SweepOptions {
            parallelism: 0,
            resume: true,
        },
    )?;
    eprintln!(
        "{} runs: {} executed, {} reused, {} failed ({})",
        summary.scheduled,
        summary.executed,
        summary.skipped,
        summary.failed,
        dir.display()
    );
    let results = SweepResults::load(&dir)?;
    print!("{}", emit_heatmap(&results)?);
    println!();
    print!("{}", emit_robustness(&[results])?);
    Ok(())
}
