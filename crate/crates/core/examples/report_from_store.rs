//! Builds any report kind from existing sweep stores, the library counterpart of
//! `pmdlab report`.
//!
//! `cargo run --example report_from_store -- <kind> <store_dir>...`
//!
//! Kinds: heatmap, robustness, frequency, quantiles, min_temp.

use std::path::Path;

use clap::ValueEnum;
use pmdlab::harness::cli::{build_report, ReportKind};
use pmdlab::harness::SweepResults;
use pmdlab::metrics::{TemperatureAxis, DEFAULT_SUCCESS_THRESHOLD};

fn main() -> pmdlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let usage = || pmdlab::Error::Usage("usage: report_from_store <kind> <store_dir>...".into());
    let kind = args.next().ok_or_else(usage)?;
    let kind = ReportKind::from_str(&kind, true).map_err(|e| pmdlab::Error::Usage(e))?;
    let stores = args
        .map(|d| SweepResults::load(Path::new(&d)))
        .collect::<pmdlab::Result<Vec<_>>>()?;
    if stores.is_empty() {
        return Err(usage());
    }
    print!(
        "{}",
        build_report(
            kind,
            &stores,
            TemperatureAxis::Alpha,
            DEFAULT_SUCCESS_THRESHOLD
        )?
    );
    Ok(())
}
