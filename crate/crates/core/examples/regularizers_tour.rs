//! Prints every regularizer and drift on a few three-action distributions.
//!
//! `cargo run --example regularizers_tour`

use pmdlab::regularizers::{
    drift_value, h_bound, h_value, ActionDistribution, DriftSpec, RegularizerSpec,
};

fn main() -> pmdlab::Result<()> {
    let uniform = ActionDistribution::uniform(3)?;
    let peaked = ActionDistribution::new(vec![0.8, 0.15, 0.05])?;
    let greedy = ActionDistribution::new(vec![1.0, 0.0, 0.0])?;

    println!(
        "{:<16} {:>10} {:>10} {:>10} {:>10}",
        "h", "uniform", "peaked", "greedy", "|h|<="
    );
    for h in RegularizerSpec::catalogue() {
        println!(
            "{:<16} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            h.to_string(),
            h_value(h, &uniform),
            h_value(h, &peaked),
            h_value(h, &greedy),
            h_bound(h, 3)?
        );
    }

    println!();
    println!("drift from uniform to peaked, and back");
    let mut drifts = vec![DriftSpec::ReverseKL, DriftSpec::ForwardKL];
    drifts.extend(
        RegularizerSpec::catalogue()
            .into_iter()
            .map(DriftSpec::Bregman),
    );
    for d in drifts {
        println!(
            "{:<24} {:>10.5} {:>10.5}",
            d.to_string(),
            drift_value(d, &peaked, &uniform)?,
            drift_value(d, &uniform, &peaked)?
        );
    }
    Ok(())
}
