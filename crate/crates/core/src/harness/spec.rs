use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{AgentConfig, ScheduleMode, TemperatureSchedule};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::regularizers::{DriftSpec, RegularizerSpec};

/// Drift temperatures of the full study (29 values).
pub const LAMBDA_GRID: [f64; 29] = [
    0.0, 5e-5, 7.5e-5, 1e-4, 2.5e-4, 5e-4, 7.5e-4, 1e-3, 5e-3, 1e-2, 2.5e-2, 5e-2, 1e-1, 2.5e-1,
    5e-1, 1.0, 2.5, 5.0, 7.5, 10.0, 25.0, 50.0, 1e2, 5e2, 1e3, 2.5e3, 5e3, 1e4, 5e4,
];

/// MDP-regularizer temperatures of the full study (29 values).
pub const ALPHA_GRID: [f64; 29] = [
    0.0, 0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007, 0.008, 0.009, 0.01, 0.02, 0.03, 0.04,
    0.05, 0.06, 0.07, 0.08, 0.09, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
];

/// 9-value subset of [`ALPHA_GRID`] used by the desk preset.
pub const DESK_ALPHA_GRID: [f64; 9] = [0.0, 0.001, 0.002, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0];

/// 9-value subset of [`LAMBDA_GRID`] used by the desk preset.
pub const DESK_LAMBDA_GRID: [f64; 9] = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1000.0];

/// `(alpha_grid, lambda_grid)` of the full study.
pub fn default_grids() -> (Vec<f64>, Vec<f64>) {
    (ALPHA_GRID.to_vec(), LAMBDA_GRID.to_vec())
}

pub fn desk_grids() -> (Vec<f64>, Vec<f64>) {
    (DESK_ALPHA_GRID.to_vec(), DESK_LAMBDA_GRID.to_vec())
}

pub const SPEC_SCHEMA_VERSION: u32 = 1;

/// Scale presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 29 x 29 grid, 5 seeds, 10 evaluations, 10^6 steps.
    Full,
    /// 9 x 9 grid, 3 seeds, 10 evaluations, 2 * 10^5 steps.
    Desk,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Full => "full",
            Preset::Desk => "desk",
        })
    }
}

pub const DESK_TOTAL_STEPS: u64 = 200_000;

/// Optional replacements for [`AgentConfig`] fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_env_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_update: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_capacity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
}

impl AgentOverrides {
    pub fn apply(&self, c: &mut AgentConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { c.$f = v.clone(); })*};
        }
        set!(
            total_env_steps,
            gamma,
            env_count,
            steps_per_update,
            batch_size,
            critic_epochs,
            actor_epochs,
            tau,
            learning_rate,
            max_grad_norm,
            buffer_capacity,
            hidden
        );
    }
}

fn default_schema() -> u32 {
    SPEC_SCHEMA_VERSION
}
fn default_true() -> bool {
    true
}
fn default_log_every() -> u64 {
    1
}

/// A temperature sweep for one `(h, D)` pair and schedule combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub sweep_id: String,
    pub regularizer: RegularizerSpec,
    pub drift: DriftSpec,
    #[serde(default)]
    pub alpha_schedule: ScheduleMode,
    #[serde(default)]
    pub lambda_schedule: ScheduleMode,
    /// `false` selects the variant whose critic ignores the MDP regularizer.
    #[serde(default = "default_true")]
    pub use_regularized_q: bool,
    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub envs: Vec<EnvConfig>,
    pub seeds_per_config: usize,
    pub evals_per_seed: usize,
    #[serde(default)]
    pub agent: AgentOverrides,
    /// Keep every `log_every`-th iteration row in the training log.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

/// One `(config, env, seed)` unit of work.
#[derive(Debug, Clone, PartialEq)]
pub struct RunKey {
    pub alpha: f64,
    pub lambda: f64,
    pub config_id: String,
    pub env: EnvConfig,
    pub env_id: String,
    pub seed_index: usize,
    pub seed: u64,
}

/// Identifier of a grid cell, e.g. `a0.01_l0.1`.
pub fn config_id(alpha: f64, lambda: f64) -> String {
    format!("a{alpha}_l{lambda}")
}

/// First 8 bytes (little endian) of `sha256("{sweep}|{config}|{env}|{seed_index}")`.
pub fn run_seed(sweep_id: &str, config_id: &str, env_id: &str, seed_index: usize) -> u64 {
    let digest = Sha256::digest(format!("{sweep_id}|{config_id}|{env_id}|{seed_index}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

impl SweepSpec {
    /// Full-scale sweep on the four-environment suite.
    pub fn full(sweep_id: &str, regularizer: RegularizerSpec, drift: DriftSpec) -> Self {
        let (alpha_grid, lambda_grid) = default_grids();
        SweepSpec {
            schema_version: SPEC_SCHEMA_VERSION,
            sweep_id: sweep_id.into(),
            regularizer,
            drift,
            alpha_schedule: ScheduleMode::Constant,
            lambda_schedule: ScheduleMode::Constant,
            use_regularized_q: true,
            alpha_grid,
            lambda_grid,
            envs: EnvConfig::standard_suite(),
            seeds_per_config: 5,
            evals_per_seed: 10,
            agent: AgentOverrides::default(),
            log_every: 1,
        }
    }

    pub fn desk(sweep_id: &str, regularizer: RegularizerSpec, drift: DriftSpec) -> Self {
        let mut s = Self::full(sweep_id, regularizer, drift);
        s.apply_preset(Preset::Desk);
        s
    }

    /// Resets grids, seed and evaluation counts and the step budget to a preset.
    pub fn apply_preset(&mut self, preset: Preset) {
        let (a, l, n, steps) = match preset {
            Preset::Full => (ALPHA_GRID.to_vec(), LAMBDA_GRID.to_vec(), 5, None),
            Preset::Desk => (
                DESK_ALPHA_GRID.to_vec(),
                DESK_LAMBDA_GRID.to_vec(),
                3,
                Some(DESK_TOTAL_STEPS),
            ),
        };
        self.alpha_grid = a;
        self.lambda_grid = l;
        self.seeds_per_config = n;
        self.evals_per_seed = 10;
        self.agent.total_env_steps = steps;
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text)
            .map_err(|e| Error::Usage(format!("malformed sweep spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Hex sha256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        if self.schema_version != SPEC_SCHEMA_VERSION {
            return usage(format!("unsupported spec schema {}", self.schema_version));
        }
        if self.sweep_id.is_empty() || self.sweep_id.contains(['|', '/', '\\']) {
            return usage(format!("invalid sweep_id '{}'", self.sweep_id));
        }
        if self.alpha_grid.is_empty() || self.lambda_grid.is_empty() {
            return usage("temperature grids must be nonempty".into());
        }
        for (name, grid) in [("alpha", &self.alpha_grid), ("lambda", &self.lambda_grid)] {
            let mut seen = std::collections::HashSet::new();
            for v in grid.iter() {
                if !(v.is_finite() && *v >= 0.0) {
                    return usage(format!("{name} grid value {v} must be finite and >= 0"));
                }
                if !seen.insert(v.to_bits()) {
                    return usage(format!("{name} grid repeats {v}"));
                }
            }
        }
        if self.envs.is_empty() {
            return usage("env suite is empty".into());
        }
        let mut ids = std::collections::HashSet::new();
        for e in &self.envs {
            e.validate()?;
            if !ids.insert(e.id()) {
                return usage(format!("environment {} listed twice", e.id()));
            }
        }
        if self.seeds_per_config == 0 || self.evals_per_seed == 0 || self.log_every == 0 {
            return usage("seed, evaluation and log counts must be positive".into());
        }
        if self.lambda_schedule.name().starts_with("learned") {
            return usage("lambda cannot be learned".into());
        }
        self.agent_config(self.alpha_grid[0], self.lambda_grid[0])
            .validate()
    }

    pub fn config_count(&self) -> usize {
        self.alpha_grid.len() * self.lambda_grid.len()
    }

    pub fn run_count(&self) -> usize {
        self.config_count() * self.envs.len() * self.seeds_per_config
    }

    pub fn agent_config(&self, alpha: f64, lambda: f64) -> AgentConfig {
        let mut c = AgentConfig {
            regularizer: self.regularizer,
            drift: self.drift,
            alpha_schedule: TemperatureSchedule::from_mode(self.alpha_schedule, alpha),
            lambda_schedule: TemperatureSchedule::from_mode(self.lambda_schedule, lambda),
            use_regularized_q: self.use_regularized_q,
            ..AgentConfig::default()
        };
        self.agent.apply(&mut c);
        c
    }

    /// Every run in canonical order: alpha, lambda, environment, seed index.
    pub fn runs(&self) -> Vec<RunKey> {
        let mut out = Vec::with_capacity(self.run_count());
        for &alpha in &self.alpha_grid {
            for &lambda in &self.lambda_grid {
                let cid = config_id(alpha, lambda);
                for env in &self.envs {
                    let env_id = env.id();
                    for seed_index in 0..self.seeds_per_config {
                        out.push(RunKey {
                            alpha,
                            lambda,
                            seed: run_seed(&self.sweep_id, &cid, &env_id, seed_index),
                            config_id: cid.clone(),
                            env: env.clone(),
                            env_id: env_id.clone(),
                            seed_index,
                        });
                    }
                }
            }
        }
        out
    }

    /// Human-readable label, e.g. `MDPO(neg_shannon, rkl)`.
    pub fn label(&self) -> String {
        let mut s = format!("MDPO({}, {})", self.regularizer, self.drift);
        if !self.use_regularized_q {
            s.push_str(" apmd");
        }
        if self.alpha_schedule != ScheduleMode::Constant
            || self.lambda_schedule != ScheduleMode::Constant
        {
            s.push_str(&format!(
                " alpha={} lambda={}",
                self.alpha_schedule, self.lambda_schedule
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let (a, l) = default_grids();
        assert_eq!(a.len(), 29);
        assert_eq!(l.len(), 29);
        assert_eq!(a.len() * l.len(), 841);
        assert!(DESK_ALPHA_GRID.iter().all(|v| ALPHA_GRID.contains(v)));
        assert!(DESK_LAMBDA_GRID.iter().all(|v| LAMBDA_GRID.contains(v)));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(l.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn full_run_count() {
        let s = SweepSpec::full("base", RegularizerSpec::NegShannon, DriftSpec::ReverseKL);
        assert_eq!(s.run_count(), 4 * 4205);
        assert_eq!(s.runs().len(), 16_820);
    }

    #[test]
    fn desk_preset() {
        let s = SweepSpec::desk("d", RegularizerSpec::NegShannon, DriftSpec::ReverseKL);
        assert_eq!(s.config_count(), 81);
        assert_eq!(s.seeds_per_config, 3);
        assert_eq!(s.agent_config(0.0, 0.0).total_env_steps, 200_000);
        assert_eq!(s.agent_config(0.0, 0.0).iterations(), 781);
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let s = SweepSpec::desk(
            "d",
            RegularizerSpec::Max,
            DriftSpec::Bregman(RegularizerSpec::sq_l2()),
        );
        let back = SweepSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.content_hash(), s.content_hash());
        assert!(matches!(SweepSpec::from_json("{"), Err(Error::Usage(_))));
        let extra = s.to_json().replacen('{', "{\"bogus\": 1,", 1);
        assert!(matches!(SweepSpec::from_json(&extra), Err(Error::Usage(_))));
        let mut dup = s.clone();
        dup.alpha_grid.push(0.0);
        assert!(dup.validate().is_err());
    }

    #[test]
    fn seeds_are_stable_and_isolated() {
        let s = SweepSpec::desk("d", RegularizerSpec::NegShannon, DriftSpec::ReverseKL);
        let a = s.runs();
        assert_eq!(a, s.runs());
        let mut t = s.clone();
        t.alpha_grid[3] = 0.003;
        let b = t.runs();
        for (x, y) in a.iter().zip(&b) {
            if x.alpha == s.alpha_grid[3] {
                assert_ne!(x.seed, y.seed);
            } else {
                assert_eq!(x.seed, y.seed);
            }
        }
        let seeds: std::collections::HashSet<u64> = a.iter().map(|k| k.seed).collect();
        assert_eq!(seeds.len(), a.len());
    }
}
