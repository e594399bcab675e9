//! Engine constants and the run configuration file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::IntensityLaw;
use crate::simagent::AgentParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config file: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Timing, geometry and intensity constants shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Nominal target-circle radius (cm); also the fallback intensity reference.
    pub d_c: f64,
    pub zone_fraction: f64,
    pub floor: f64,
    pub far_max: f64,
    /// Hand-to-target distance (cm) that counts as reached.
    pub attain_radius: f64,
    /// Length of the all-tactor end-of-trial buzz (s).
    pub buzz_s: f64,
    /// Pose sampling period (s).
    pub tick_s: f64,
    pub timeout_s: f64,
    /// Critical-region radius used by the trajectory metrics (cm).
    pub critical_radius: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            d_c: 35.0,
            zone_fraction: 0.2,
            floor: 0.59,
            far_max: 0.8,
            attain_radius: 3.5,
            buzz_s: 1.0,
            tick_s: 1.0 / 30.0,
            timeout_s: 120.0,
            critical_radius: 21.0,
        }
    }
}

impl EngineConfig {
    pub fn intensity_law(&self) -> IntensityLaw {
        IntensityLaw { d_c: self.d_c, zone_fraction: self.zone_fraction, floor: self.floor, far_max: self.far_max }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.intensity_law().is_valid() {
            return Err(ConfigError::Invalid(format!("intensity law {:?}", self.intensity_law())));
        }
        let positive = [
            ("attain_radius", self.attain_radius),
            ("buzz_s", self.buzz_s),
            ("tick_s", self.tick_s),
            ("timeout_s", self.timeout_s),
            ("critical_radius", self.critical_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Contents of a `--params` file: `[engine]` and `[agent]` tables, both optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub agent: AgentParams,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.engine.validate()?;
        cfg.agent.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}
