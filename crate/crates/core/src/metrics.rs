//! Normalized returns, cross-environment aggregation, frequency curves,
//! robustness, top-quantile summaries and minimal-temperature regressions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::env::ReturnBounds;
use crate::error::{Error, Result};

/// Success threshold for the minimal-temperature scan.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.85;
/// Alternative, looser success threshold.
pub const LOOSE_SUCCESS_THRESHOLD: f64 = 0.75;
/// Cap on `lambda` when scanning `alpha`.
pub const DEFAULT_LAMBDA_CAP: f64 = 1e-3;
/// Cap on `alpha` when scanning `lambda`.
pub const DEFAULT_ALPHA_CAP: f64 = 0.002;
/// Thresholds reported in robustness tables.
pub const ROBUSTNESS_THRESHOLDS: [f64; 2] = [0.9, 0.95];

/// Linear rescale of a raw return to `[0, 1]`, clamped.
pub fn normalize_return(raw: f64, bounds: ReturnBounds) -> Result<f64> {
    let span = bounds.r_max - bounds.r_min;
    if !(span.is_finite() && span != 0.0) {
        return Err(Error::Config(format!(
            "degenerate return bounds [{}, {}]",
            bounds.r_min, bounds.r_max
        )));
    }
    Ok(((raw - bounds.r_min) / span).clamp(0.0, 1.0))
}

/// Evaluation returns of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_id: String,
    pub env: String,
    pub seed: u64,
    pub eval_returns: Vec<f64>,
}

/// Per-environment mean normalized return.
pub fn per_env_means(
    records: &[RunRecord],
    bounds: &BTreeMap<String, ReturnBounds>,
) -> Result<BTreeMap<String, f64>> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records {
        let b = bounds.get(&r.env).ok_or_else(|| {
            Error::Config(format!("no return bounds for environment '{}'", r.env))
        })?;
        let slot = sums.entry(r.env.as_str()).or_default();
        for &x in &r.eval_returns {
            slot.0 += normalize_return(x, *b)?;
            slot.1 += 1;
        }
    }
    let mut out = BTreeMap::new();
    for env in bounds.keys() {
        match sums.get(env.as_str()) {
            Some(&(s, n)) if n > 0 => {
                out.insert(env.clone(), s / n as f64);
            }
            _ => {
                return Err(Error::IncompleteData(format!(
                    "no evaluation returns for environment '{env}'"
                )))
            }
        }
    }
    Ok(out)
}

/// Mean over environments of the per-environment mean normalized return.
///
/// With equal record counts per environment this is the plain mean of all
/// normalized evaluation returns.
pub fn aggregate(records: &[RunRecord], bounds: &BTreeMap<String, ReturnBounds>) -> Result<f64> {
    let means = per_env_means(records, bounds)?;
    Ok(means.values().sum::<f64>() / means.len() as f64)
}

/// One grid cell of a performance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub alpha: f64,
    pub lambda: f64,
    pub value: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_env: BTreeMap<String, f64>,
}

impl Cell {
    pub fn new(alpha: f64, lambda: f64, value: f64) -> Self {
        Cell {
            alpha,
            lambda,
            value,
            per_env: BTreeMap::new(),
        }
    }
}

/// Aggregated normalized return per `(alpha, lambda)` cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerformanceTable {
    pub cells: Vec<Cell>,
}

impl PerformanceTable {
    pub fn new(cells: Vec<Cell>) -> Result<Self> {
        for c in &cells {
            if !(0.0..=1.0).contains(&c.value) {
                return Err(Error::Domain(format!(
                    "cell ({}, {}) has value {} outside [0, 1]",
                    c.alpha, c.lambda, c.value
                )));
            }
        }
        Ok(PerformanceTable { cells })
    }

    /// Table from `(alpha, lambda, value)` triples.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            triples
                .iter()
                .map(|&(a, l, v)| Cell::new(a, l, v))
                .collect(),
        )
    }

    /// Table with arbitrary coordinates, for value-only computations.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| Cell::new(i as f64, i as f64, v))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells with `alpha > 0` and `lambda > 0`.
    pub fn positive(&self) -> PerformanceTable {
        PerformanceTable {
            cells: self
                .cells
                .iter()
                .filter(|c| c.alpha > 0.0 && c.lambda > 0.0)
                .cloned()
                .collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().map(|c| c.value)
    }
}

/// Fraction of cells with value `>= tau`.
pub fn perf_frequency(tau: f64, table: &PerformanceTable) -> f64 {
    if table.is_empty() {
        return 0.0;
    }
    table.values().filter(|&v| v >= tau).count() as f64 / table.len() as f64
}

/// `perf_frequency` sampled at `tau = 0.00, 0.01, ..., 1.00`.
pub fn frequency_curve(table: &PerformanceTable) -> Vec<(f64, f64)> {
    (0..=100)
        .map(|i| {
            let tau = i as f64 / 100.0;
            (tau, perf_frequency(tau, table))
        })
        .collect()
}

/// Normalized area under the frequency curve above `threshold`:
/// `(1 / ((1 - T) |cells|)) * sum max(0, min(d, 1) - T)`.
pub fn robustness(threshold: f64, table: &PerformanceTable) -> Result<f64> {
    if !(threshold < 1.0) || threshold.is_nan() {
        return Err(Error::Domain(format!(
            "robustness threshold must be < 1, got {threshold}"
        )));
    }
    if table.is_empty() {
        return Err(Error::IncompleteData("empty performance table".into()));
    }
    let total: f64 = table
        .values()
        .map(|d| (d.min(1.0) - threshold).max(0.0))
        .sum();
    Ok(total / ((1.0 - threshold) * table.len() as f64))
}

/// Mean and population standard deviation of the best `ceil(q * count)` cells.
///
/// Ties at the cutoff are broken by ascending `(alpha, lambda)`.
pub fn top_quantile_stats(
    q: f64,
    table: &PerformanceTable,
    restrict_positive: bool,
) -> Result<(f64, f64)> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!(
            "quantile must lie in (0, 1], got {q}"
        )));
    }
    let pool = if restrict_positive {
        table.positive()
    } else {
        table.clone()
    };
    if pool.is_empty() {
        return Err(Error::IncompleteData(
            "no cells left after restricting to positive temperatures".into(),
        ));
    }
    let mut cells = pool.cells;
    cells.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then(a.alpha.total_cmp(&b.alpha))
            .then(a.lambda.total_cmp(&b.lambda))
    });
    let k = ((q * cells.len() as f64).ceil() as usize).clamp(1, cells.len());
    let top: Vec<f64> = cells[..k].iter().map(|c| c.value).collect();
    let mean = top.iter().sum::<f64>() / k as f64;
    let var = top.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemperatureAxis {
    Alpha,
    Lambda,
}

impl TemperatureAxis {
    /// Default cap on the other temperature during a scan of this axis.
    pub fn default_cap(self) -> f64 {
        match self {
            TemperatureAxis::Alpha => DEFAULT_LAMBDA_CAP,
            TemperatureAxis::Lambda => DEFAULT_ALPHA_CAP,
        }
    }
}

/// Smallest temperature on `axis` whose cell reaches `threshold`, considering only
/// cells where the other temperature is `<= other_axis_cap`.
pub fn min_required_temperature(
    axis: TemperatureAxis,
    threshold: f64,
    table: &PerformanceTable,
    other_axis_cap: f64,
) -> Option<f64> {
    table
        .cells
        .iter()
        .filter(|c| {
            let other = match axis {
                TemperatureAxis::Alpha => c.lambda,
                TemperatureAxis::Lambda => c.alpha,
            };
            other <= other_axis_cap && c.value >= threshold
        })
        .map(|c| match axis {
            TemperatureAxis::Alpha => c.alpha,
            TemperatureAxis::Lambda => c.lambda,
        })
        .min_by(f64::total_cmp)
}

/// Ordinary least squares fit `y = slope * x + intercept` with a 95% band on the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    /// Residual standard error.
    pub sigma: f64,
    pub x_mean: f64,
    pub sxx: f64,
    /// Two-sided 97.5% Student-t quantile with `n - 2` degrees of freedom.
    pub t_crit: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Half-width of the 95% confidence band of the fitted line at `x`.
    pub fn half_width(&self, x: f64) -> f64 {
        let n = self.n as f64;
        self.t_crit * self.sigma * (1.0 / n + (x - self.x_mean).powi(2) / self.sxx).sqrt()
    }

    pub fn band(&self, x: f64) -> (f64, f64) {
        let (y, w) = (self.predict(x), self.half_width(x));
        (y - w, y + w)
    }
}

pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 3 {
        return Err(Error::Precondition(format!(
            "linear fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Numerical("non-finite point in linear fit".into()));
    }
    let n = points.len() as f64;
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - x_mean).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - x_mean) * (p.1 - y_mean)).sum();
    let scale = points
        .iter()
        .map(|p| p.0.abs())
        .fold(0.0, f64::max)
        .max(1.0);
    if sxx <= 1e-12 * scale * scale * n {
        return Err(Error::Rank("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let dof = n - 2.0;
    let sigma = (sse / dof).sqrt();
    let t_crit = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Numerical(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(LinearFit {
        slope,
        intercept,
        n: points.len(),
        sigma,
        x_mean,
        sxx,
        t_crit,
    })
}
