//! Shared JSON configuration for the planner and the simulator CLI.
//!
//! One file carries the physical channel, the blockchain demand shape and
//! the planner's supply conventions; command-line flags override individual
//! fields. Scenario files for `simulate` use the separate
//! [`crate::simnet::ScenarioConfig`] schema.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{DemandParams, SupplyOptions};
use crate::qkd::ChannelParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Planner-side accounting options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerOptions {
    /// Derate supply by the unordered pair count (shared-relay variant).
    #[serde(default)]
    pub tdm: bool,
    /// Bill hash keys in addition to OTP keys (doubles demand).
    #[serde(default)]
    pub count_hash_keys: bool,
}

impl PlannerOptions {
    pub fn supply(&self) -> SupplyOptions {
        SupplyOptions { tdm: self.tdm }
    }

    /// Demand multiplier implied by the accounting flag.
    pub fn demand_factor(&self) -> f64 {
        if self.count_hash_keys {
            2.0
        } else {
            1.0
        }
    }
}

/// Top-level config file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub channel: ChannelParams<f64>,
    pub demand: DemandParams<f64>,
    #[serde(default)]
    pub planner: PlannerOptions,
}

impl Default for AppConfig {
    /// Table-II physical parameters and the metropolitan operating point.
    fn default() -> Self {
        Self {
            channel: ChannelParams::metropolitan(),
            demand: DemandParams {
                nodes: 20,
                tps: 303.0,
                block_size: 2500,
                consensus_rounds: 3,
                s_key_bits: 64,
                stratification_overhead: false,
            },
            planner: PlannerOptions::default(),
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.channel
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.demand
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Stable digest of the canonical JSON rendering (manifest identity).
    pub fn digest_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.to_json().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let cfg = AppConfig::default();
        assert!(cfg.validate().is_ok());
        let js = cfg.to_json();
        let back: AppConfig = serde_json::from_str(&js).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.digest_hex().len(), 64);
        assert_eq!(cfg.digest_hex(), back.digest_hex());
    }

    #[test]
    fn unknown_fields_rejected() {
        let js = r#"{"channel": {}, "demand": {}, "typo": 1}"#;
        assert!(serde_json::from_str::<AppConfig>(js).is_err());
    }

    #[test]
    fn file_round_trip() {
        let cfg = AppConfig::default();
        let dir = std::env::temp_dir().join("tfq-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("config.json");
        std::fs::write(&path, cfg.to_json()).unwrap();
        let back = AppConfig::from_file(&path).unwrap();
        assert_eq!(back, cfg);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn planner_options_effects() {
        let mut opts = PlannerOptions::default();
        assert_eq!(opts.demand_factor(), 1.0);
        assert!(!opts.supply().tdm);
        opts.count_hash_keys = true;
        opts.tdm = true;
        assert_eq!(opts.demand_factor(), 2.0);
        assert!(opts.supply().tdm);
    }
}
