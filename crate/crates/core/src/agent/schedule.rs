use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear decay from `initial` at step 0 to exactly 0 at `total` steps.
pub fn linear_anneal(initial: f64, step: u64, total: u64) -> f64 {
    if total == 0 || step >= total {
        return 0.0;
    }
    initial * (1.0 - step as f64 / total as f64)
}

/// Weight `w` on the reference target `h_bar_0` of the learned temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetWeight {
    Constant { w: f64 },
    LinearAnneal { w0: f64 },
}

impl TargetWeight {
    pub fn at(&self, step: u64, total: u64) -> f64 {
        match *self {
            TargetWeight::Constant { w } => w,
            TargetWeight::LinearAnneal { w0 } => linear_anneal(w0, step, total),
        }
    }
}

/// How a temperature evolves over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TemperatureSchedule {
    Constant {
        value: f64,
    },
    /// Decays to 0 at the end of the training budget.
    LinearAnneal {
        initial: f64,
    },
    /// `alpha = exp(log_alpha)` trained toward the target `w * h_bar_0`.
    Learned {
        target: TargetWeight,
        initial_alpha: f64,
    },
}

/// Default starting temperature for learned `alpha`.
pub const LEARNED_ALPHA_INIT: f64 = 0.01;

impl TemperatureSchedule {
    pub fn constant(value: f64) -> Self {
        TemperatureSchedule::Constant { value }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let (v, what) = match *self {
            TemperatureSchedule::Constant { value } => (value, "value"),
            TemperatureSchedule::LinearAnneal { initial } => (initial, "initial value"),
            TemperatureSchedule::Learned {
                initial_alpha,
                target,
            } => {
                let w = match target {
                    TargetWeight::Constant { w } => w,
                    TargetWeight::LinearAnneal { w0 } => w0,
                };
                if !w.is_finite() {
                    return Err(Error::Config(format!("{name}: target weight {w}")));
                }
                if !(initial_alpha.is_finite() && initial_alpha > 0.0) {
                    return Err(Error::Config(format!(
                        "{name}: learned temperature needs a positive initial value, got {initial_alpha}"
                    )));
                }
                return Ok(());
            }
        };
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Config(format!(
                "{name}: {what} must be >= 0, got {v}"
            )));
        }
        Ok(())
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, TemperatureSchedule::Learned { .. })
    }

    /// Temperature emitted at `step` for non-learned schedules; `None` for learned ones.
    pub fn scheduled_value(&self, step: u64, total: u64) -> Option<f64> {
        match *self {
            TemperatureSchedule::Constant { value } => Some(value),
            TemperatureSchedule::LinearAnneal { initial } => {
                Some(linear_anneal(initial, step, total))
            }
            TemperatureSchedule::Learned { .. } => None,
        }
    }

    /// Builds a schedule from a mode and a grid value. For learned modes the grid
    /// value is the target weight.
    pub fn from_mode(mode: ScheduleMode, value: f64) -> Self {
        match mode {
            ScheduleMode::Constant => TemperatureSchedule::Constant { value },
            ScheduleMode::LinearAnneal => TemperatureSchedule::LinearAnneal { initial: value },
            ScheduleMode::LearnedConstant => TemperatureSchedule::Learned {
                target: TargetWeight::Constant { w: value },
                initial_alpha: LEARNED_ALPHA_INIT,
            },
            ScheduleMode::LearnedAnneal => TemperatureSchedule::Learned {
                target: TargetWeight::LinearAnneal { w0: value },
                initial_alpha: LEARNED_ALPHA_INIT,
            },
        }
    }
}

/// Schedule family selected on the command line or in a sweep file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    #[default]
    Constant,
    LinearAnneal,
    LearnedConstant,
    LearnedAnneal,
}

impl ScheduleMode {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleMode::Constant => "constant",
            ScheduleMode::LinearAnneal => "linear_anneal",
            ScheduleMode::LearnedConstant => "learned_constant",
            ScheduleMode::LearnedAnneal => "learned_anneal",
        }
    }
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "constant" | "const" => Ok(ScheduleMode::Constant),
            "linear_anneal" | "linear" | "anneal" => Ok(ScheduleMode::LinearAnneal),
            "learned_constant" | "learned" => Ok(ScheduleMode::LearnedConstant),
            "learned_anneal" | "learned_linear" => Ok(ScheduleMode::LearnedAnneal),
            other => Err(Error::Config(format!("unknown schedule mode '{other}'"))),
        }
    }
}
