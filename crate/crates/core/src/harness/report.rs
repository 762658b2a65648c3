use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::spec::{config_id, SweepSpec};
use super::store::{read_ndjson, RunManifest, StoredRun, RECORDS_FILE};
use crate::env::ReturnBounds;
use crate::error::{Error, Result};
use crate::metrics::{
    frequency_curve, linear_fit, min_required_temperature, normalize_return, per_env_means,
    robustness, top_quantile_stats, Cell, PerformanceTable, TemperatureAxis,
};

pub const HEATMAP_HEADER: &str = "alpha,lambda,mean_norm_return,std_norm_return,n_runs";
pub const ROBUSTNESS_HEADER: &str = "label,h,D,rbst_090,rbst_095";
pub const FREQUENCY_HEADER: &str = "label,tau,frequency";
pub const QUANTILE_HEADER: &str =
    "label,h,D,alpha_schedule,lambda_schedule,top1_mean,top1_std,top10_mean,top10_std";
pub const MIN_TEMP_HEADER: &str = "max_return,min_alpha,min_lambda,slope,intercept,ci_low,ci_high";

/// A sweep spec together with the records of its store.
#[derive(Debug, Clone)]
pub struct SweepResults {
    pub spec: SweepSpec,
    pub records: Vec<StoredRun>,
}

impl SweepResults {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = RunManifest::load(dir)?;
        Ok(SweepResults {
            spec: manifest.spec,
            records: read_ndjson(&dir.join(RECORDS_FILE))?,
        })
    }

    fn bounds(&self) -> BTreeMap<String, ReturnBounds> {
        self.spec
            .envs
            .iter()
            .map(|e| (e.id(), e.bounds()))
            .collect()
    }
}

/// Aggregated statistics of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub alpha: f64,
    pub lambda: f64,
    /// Mean over environments of per-environment mean normalized return; `None` without runs.
    pub mean: Option<f64>,
    /// Population standard deviation of per-run mean normalized returns.
    pub std: Option<f64>,
    pub n_runs: usize,
    pub per_env: BTreeMap<String, f64>,
    /// `env/seed` labels of runs not in the store.
    pub missing: Vec<String>,
}

/// Per-cell summaries in `(alpha asc, lambda asc)` order.
pub fn cell_summaries(results: &SweepResults) -> Result<Vec<CellSummary>> {
    let spec = &results.spec;
    let bounds = results.bounds();
    let mut by_cell: BTreeMap<&str, Vec<&StoredRun>> = BTreeMap::new();
    for r in &results.records {
        by_cell.entry(r.config_id.as_str()).or_default().push(r);
    }
    let mut alphas = spec.alpha_grid.clone();
    let mut lambdas = spec.lambda_grid.clone();
    alphas.sort_by(f64::total_cmp);
    lambdas.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(alphas.len() * lambdas.len());
    for &alpha in &alphas {
        for &lambda in &lambdas {
            let cid = config_id(alpha, lambda);
            let runs = by_cell.get(cid.as_str()).cloned().unwrap_or_default();
            let mut missing = Vec::new();
            for env in &spec.envs {
                let id = env.id();
                for s in 0..spec.seeds_per_config {
                    if !runs.iter().any(|r| r.env == id && r.seed_index == s) {
                        missing.push(format!("{id}/seed{s}"));
                    }
                }
            }
            let (mean, std, per_env) = if runs.is_empty() {
                (None, None, BTreeMap::new())
            } else {
                let present: BTreeMap<String, ReturnBounds> = bounds
                    .iter()
                    .filter(|(id, _)| runs.iter().any(|r| &r.env == *id))
                    .map(|(k, v)| (k.clone(), *v))
                    .collect();
                let records: Vec<_> = runs.iter().map(|r| r.to_record()).collect();
                let per_env = per_env_means(&records, &present)?;
                let mean = per_env.values().sum::<f64>() / per_env.len() as f64;
                let mut run_means = Vec::with_capacity(runs.len());
                for r in &runs {
                    let b = present[&r.env];
                    let mut s = 0.0;
                    for &x in &r.eval_returns {
                        s += normalize_return(x, b)?;
                    }
                    run_means.push(s / r.eval_returns.len().max(1) as f64);
                }
                let m = run_means.iter().sum::<f64>() / run_means.len() as f64;
                let var =
                    run_means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / run_means.len() as f64;
                (Some(mean), Some(var.sqrt()), per_env)
            };
            out.push(CellSummary {
                alpha,
                lambda,
                mean,
                std,
                n_runs: runs.len(),
                per_env,
                missing,
            });
        }
    }
    Ok(out)
}

/// Performance table over all cells; errors naming the missing runs if any cell is incomplete.
pub fn performance_table(results: &SweepResults) -> Result<PerformanceTable> {
    let cells = cell_summaries(results)?;
    let missing: Vec<String> = cells
        .iter()
        .flat_map(|c| {
            c.missing
                .iter()
                .map(move |m| format!("{}:{m}", config_id(c.alpha, c.lambda)))
        })
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
        return Err(Error::IncompleteData(format!(
            "sweep '{}' lacks {} run(s): {}{}",
            results.spec.sweep_id,
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() {
                ", ..."
            } else {
                ""
            }
        )));
    }
    PerformanceTable::new(
        cells
            .into_iter()
            .map(|c| Cell {
                alpha: c.alpha,
                lambda: c.lambda,
                value: c.mean.expect("complete cell has runs"),
                per_env: c.per_env,
            })
            .collect(),
    )
}

fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Heat-map CSV, one row per grid cell. A trailing `missing` column lists absent runs
/// when any cell is incomplete.
pub fn emit_heatmap(results: &SweepResults) -> Result<String> {
    let cells = cell_summaries(results)?;
    let incomplete = cells.iter().any(|c| !c.missing.is_empty());
    let mut out = String::from(HEATMAP_HEADER);
    if incomplete {
        out.push_str(",missing");
    }
    out.push('\n');
    for c in &cells {
        let opt = |v: Option<f64>| v.map(fmt_metric).unwrap_or_default();
        write!(
            out,
            "{},{},{},{},{}",
            c.alpha,
            c.lambda,
            opt(c.mean),
            opt(c.std),
            c.n_runs
        )
        .expect("string write");
        if incomplete {
            write!(out, ",{}", csv_field(&c.missing.join(" "))).expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

fn positive_table(results: &SweepResults) -> Result<PerformanceTable> {
    let t = performance_table(results)?.positive();
    if t.is_empty() {
        return Err(Error::IncompleteData(format!(
            "sweep '{}' has no cells with alpha > 0 and lambda > 0",
            results.spec.sweep_id
        )));
    }
    Ok(t)
}

/// Robustness rows `(label, h, D, rbst_0.90, rbst_0.95)` sorted by `rbst_0.90` descending.
pub fn robustness_rows(all: &[SweepResults]) -> Result<Vec<(String, String, String, f64, f64)>> {
    let mut rows = Vec::with_capacity(all.len());
    for r in all {
        let t = positive_table(r)?;
        rows.push((
            r.spec.label(),
            r.spec.regularizer.to_string(),
            r.spec.drift.to_string(),
            robustness(0.9, &t)?,
            robustness(0.95, &t)?,
        ));
    }
    rows.sort_by(|a, b| b.3.total_cmp(&a.3).then_with(|| a.0.cmp(&b.0)));
    Ok(rows)
}

pub fn emit_robustness(all: &[SweepResults]) -> Result<String> {
    let mut out = format!("{ROBUSTNESS_HEADER}\n");
    for (label, h, d, r90, r95) in robustness_rows(all)? {
        writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&label),
            csv_field(&h),
            csv_field(&d),
            fmt_metric(r90),
            fmt_metric(r95)
        )
        .expect("string write");
    }
    Ok(out)
}

pub fn emit_frequency(all: &[SweepResults]) -> Result<String> {
    let mut out = format!("{FREQUENCY_HEADER}\n");
    for r in all {
        let t = positive_table(r)?;
        let label = csv_field(&r.spec.label());
        for (tau, f) in frequency_curve(&t) {
            writeln!(out, "{label},{tau:.2},{}", fmt_metric(f)).expect("string write");
        }
    }
    Ok(out)
}

pub fn emit_quantiles(all: &[SweepResults]) -> Result<String> {
    let mut out = format!("{QUANTILE_HEADER}\n");
    for r in all {
        let t = performance_table(r)?;
        let (m1, s1) = top_quantile_stats(0.01, &t, true)?;
        let (m10, s10) = top_quantile_stats(0.10, &t, true)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&r.spec.label()),
            csv_field(&r.spec.regularizer.to_string()),
            csv_field(&r.spec.drift.to_string()),
            r.spec.alpha_schedule,
            r.spec.lambda_schedule,
            fmt_metric(m1),
            fmt_metric(s1),
            fmt_metric(m10),
            fmt_metric(s10)
        )
        .expect("string write");
    }
    Ok(out)
}

/// One point of the minimal-temperature study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinTempPoint {
    pub max_return: f64,
    pub min_alpha: Option<f64>,
    pub min_lambda: Option<f64>,
}

/// Minimal temperatures of single-environment sweeps, ordered by max return.
pub fn min_temp_points(all: &[SweepResults], threshold: f64) -> Result<Vec<MinTempPoint>> {
    let mut points = Vec::with_capacity(all.len());
    for r in all {
        if r.spec.envs.len() != 1 {
            return Err(Error::Usage(format!(
                "sweep '{}' covers {} environments; minimal temperatures need exactly one",
                r.spec.sweep_id,
                r.spec.envs.len()
            )));
        }
        let t = performance_table(r)?;
        points.push(MinTempPoint {
            max_return: r.spec.envs[0].bounds().r_max,
            min_alpha: min_required_temperature(
                TemperatureAxis::Alpha,
                threshold,
                &t,
                TemperatureAxis::Alpha.default_cap(),
            ),
            min_lambda: min_required_temperature(
                TemperatureAxis::Lambda,
                threshold,
                &t,
                TemperatureAxis::Lambda.default_cap(),
            ),
        });
    }
    points.sort_by(|a, b| a.max_return.total_cmp(&b.max_return));
    Ok(points)
}

/// Min-temperature CSV. `slope`, `intercept` and the band columns refer to the regression
/// of the `axis` temperature on max return; the band is evaluated at each row's max return.
/// Fit columns stay empty when fewer than three points qualify.
pub fn emit_min_temp(points: &[MinTempPoint], axis: TemperatureAxis) -> String {
    let pick = |p: &MinTempPoint| match axis {
        TemperatureAxis::Alpha => p.min_alpha,
        TemperatureAxis::Lambda => p.min_lambda,
    };
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| pick(p).map(|y| (p.max_return, y)))
        .collect();
    let fit = linear_fit(&xy).ok();
    let mut out = format!("{MIN_TEMP_HEADER}\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        let (slope, intercept, lo, hi) = match &fit {
            Some(f) => {
                let (lo, hi) = f.band(p.max_return);
                (
                    fmt_metric(f.slope),
                    fmt_metric(f.intercept),
                    fmt_metric(lo),
                    fmt_metric(hi),
                )
            }
            None => Default::default(),
        };
        writeln!(
            out,
            "{},{},{},{slope},{intercept},{lo},{hi}",
            p.max_return,
            opt(p.min_alpha),
            opt(p.min_lambda)
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::regularizers::{DriftSpec, RegularizerSpec};

    fn synthetic(id: &str, value: impl Fn(f64, f64) -> f64) -> SweepResults {
        let mut spec = SweepSpec::desk(id, RegularizerSpec::NegShannon, DriftSpec::ReverseKL);
        spec.envs = vec![EnvConfig::catch()];
        spec.seeds_per_config = 2;
        let mut records = Vec::new();
        for k in spec.runs() {
            // catch bounds are [-1, 1]
            let v = 2.0 * value(k.alpha, k.lambda) - 1.0;
            records.push(StoredRun {
                config_id: k.config_id,
                alpha: k.alpha,
                lambda: k.lambda,
                env: k.env_id,
                seed_index: k.seed_index,
                seed: k.seed,
                eval_returns: vec![v; 3],
            });
        }
        SweepResults { spec, records }
    }

    #[test]
    fn heatmap_all_perfect() {
        let r = synthetic("p", |_, _| 1.0);
        let csv = emit_heatmap(&r).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], HEATMAP_HEADER);
        assert_eq!(lines.len(), 82);
        assert_eq!(lines[1], "0,0,1.000000,0.000000,2");
        assert!(lines[1..]
            .iter()
            .all(|l| l.split(',').nth(2) == Some("1.000000")));
    }

    #[test]
    fn heatmap_flags_missing_runs() {
        let mut r = synthetic("p", |_, _| 0.5);
        r.records.remove(0);
        let csv = emit_heatmap(&r).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].ends_with(",missing"));
        assert_eq!(lines[1], "0,0,0.500000,0.000000,1,catch/seed0");
        assert!(lines[2].ends_with(",2,"));
        assert!(
            matches!(performance_table(&r), Err(Error::IncompleteData(m)) if m.contains("a0_l0:catch/seed0"))
        );
    }

    #[test]
    fn robustness_sorted_descending() {
        let weak = synthetic("weak", |a, _| if a >= 0.5 { 0.95 } else { 0.1 });
        let strong = synthetic("strong", |a, _| if a >= 0.05 { 0.95 } else { 0.1 });
        let mut strong = strong;
        strong.spec.regularizer = RegularizerSpec::Max;
        let csv = emit_robustness(&[weak, strong]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], ROBUSTNESS_HEADER);
        assert!(lines[1].starts_with("\"MDPO(max, rkl)\",max,rkl,"));
        let r1: f64 = lines[1].split(',').nth(4).unwrap().parse().unwrap();
        let r2: f64 = lines[2].split(',').nth(4).unwrap().parse().unwrap();
        assert!(r1 > r2);
    }

    #[test]
    fn constant_table_frequency_is_one() {
        let r = synthetic("one", |_, _| 1.0);
        let csv = emit_frequency(&[r]).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 101);
        assert!(rows.iter().all(|l| l.ends_with(",1.000000")));
        assert!(rows[100].contains(",1.00,"));
    }

    #[test]
    fn min_temp_rows() {
        let all: Vec<SweepResults> = [0.1, 1.0, 2.0]
            .iter()
            .map(|&c| {
                let mut r = synthetic(&format!("s{c}"), move |a, l| {
                    if a >= 0.005 * c && l <= 1e-3 {
                        0.9
                    } else {
                        0.2
                    }
                });
                r.spec.envs = vec![EnvConfig::catch().with_reward_scale(c)];
                let id = r.spec.envs[0].id();
                for rec in &mut r.records {
                    rec.env = id.clone();
                    for x in &mut rec.eval_returns {
                        *x *= c;
                    }
                }
                r
            })
            .collect();
        let points = min_temp_points(&all, 0.85).unwrap();
        assert_eq!(
            points.iter().map(|p| p.max_return).collect::<Vec<_>>(),
            vec![0.1, 1.0, 2.0]
        );
        assert_eq!(
            points.iter().map(|p| p.min_alpha).collect::<Vec<_>>(),
            vec![Some(0.001), Some(0.005), Some(0.01)]
        );
        let csv = emit_min_temp(&points, TemperatureAxis::Alpha);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], MIN_TEMP_HEADER);
        assert_eq!(lines.len(), 4);
        let slope: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
        assert!(slope > 0.0);
    }
}
