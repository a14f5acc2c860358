//! Scenario configuration, read from a TOML file.
//!
//! ```toml
//! [scenario]
//! nodes = 500
//! horizon = 10000
//! seed = 7
//!
//! [latency]
//! median_us = 100.0
//! sigma = 0.02
//!
//! [supervisor]
//! interval = 10
//! tolerance = 0.15
//!
//! [[inject]]
//! mode = "byzantine-corrupt"
//! fraction = 0.05
//! at = 100
//! ```
//!
//! Every section is optional. Unknown keys are rejected so typos surface as
//! configuration errors instead of silently falling back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::ChallengeMessage;
use crate::events::FaultKind;
use crate::supervisor::{Policy, Tick};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub nodes: u32,
    pub horizon: Tick,
    pub seed: u64,
    /// Challenge rounds per node during calibration.
    pub calibration_rounds: u32,
    /// Challenge message as 128 hex characters; a built-in block when absent.
    pub message_hex: Option<String>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection { nodes: 100, horizon: 1000, seed: 0, calibration_rounds: 10, message_hex: None }
    }
}

/// Lognormal reply latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencySection {
    /// Pool-wide median reply time.
    pub median_us: f64,
    /// Log-space standard deviation of one node's replies.
    pub sigma: f64,
    /// Log-space standard deviation of node medians around `median_us`.
    pub node_spread: f64,
}

impl Default for LatencySection {
    fn default() -> Self {
        LatencySection { median_us: 100.0, sigma: 0.02, node_spread: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    /// Chance that a digest has one bit flipped in transit.
    pub corruption_p: f64,
    /// Share of nodes that are intra nodes (same host, no TCP/IP stack).
    pub intra_fraction: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        LinkSection { corruption_p: 0.0, intra_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub mode: FaultKind,
    /// Share of admitted nodes switched into `mode`.
    pub fraction: f64,
    /// Activation tick.
    pub at: Tick,
    /// Latency multiplier for degraded nodes.
    #[serde(default = "default_degradation")]
    pub degradation: f64,
}

fn default_degradation() -> f64 {
    1.5
}

/// Offline replay settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplaySection {
    /// Leading records per node used as calibration. Falls back to
    /// `scenario.calibration_rounds`.
    pub calibration_k: Option<usize>,
    pub nominal_interval_us: u64,
}

impl Default for ReplaySection {
    fn default() -> Self {
        ReplaySection { calibration_k: None, nominal_interval_us: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Largest k in the replication table.
    pub max_k: u64,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection { max_k: 3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub latency: LatencySection,
    pub supervisor: Policy,
    pub link: LinkSection,
    #[serde(rename = "inject")]
    pub injections: Vec<Injection>,
    pub replay: ReplaySection,
    pub report: ReportSection,
}

impl ScenarioConfig {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn message(&self) -> Result<ChallengeMessage, ConfigError> {
        match &self.scenario.message_hex {
            None => Ok(ChallengeMessage::default()),
            Some(hex) => ChallengeMessage::from_hex(hex).map_err(|e| ConfigError::Invalid(format!("message_hex: {e}"))),
        }
    }

    pub fn calibration_k(&self) -> usize {
        self.replay.calibration_k.unwrap_or(self.scenario.calibration_rounds as usize)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        let s = &self.scenario;
        if s.nodes == 0 {
            return bad("scenario.nodes must be at least 1".into());
        }
        if s.horizon == 0 {
            return bad("scenario.horizon must be at least 1".into());
        }
        if s.calibration_rounds == 0 {
            return bad("scenario.calibration_rounds must be at least 1".into());
        }
        self.message()?;

        let l = &self.latency;
        if !(l.median_us.is_finite() && l.median_us > 0.0) {
            return bad(format!("latency.median_us must be positive, got {}", l.median_us));
        }
        for (name, v) in [("latency.sigma", l.sigma), ("latency.node_spread", l.node_spread)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("link.corruption_p", self.link.corruption_p), ("link.intra_fraction", self.link.intra_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        self.supervisor.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let mut total = 0.0;
        for (i, inj) in self.injections.iter().enumerate() {
            if !(0.0..=1.0).contains(&inj.fraction) {
                return bad(format!("inject[{i}].fraction must lie in [0, 1], got {}", inj.fraction));
            }
            if inj.at > s.horizon {
                return bad(format!("inject[{i}].at = {} is beyond the horizon {}", inj.at, s.horizon));
            }
            if !(inj.degradation.is_finite() && inj.degradation >= 1.0) {
                return bad(format!("inject[{i}].degradation must be >= 1, got {}", inj.degradation));
            }
            total += inj.fraction;
        }
        // Small slack so fractions such as 0.1 + 0.2 + 0.7 pass.
        if total > 1.0 + 1e-9 {
            return bad(format!("injection fractions sum to {total}, more than 1"));
        }
        if self.replay.calibration_k == Some(0) {
            return bad("replay.calibration_k must be at least 1".into());
        }
        if self.replay.nominal_interval_us == 0 {
            return bad("replay.nominal_interval_us must be positive".into());
        }
        Ok(())
    }
}
