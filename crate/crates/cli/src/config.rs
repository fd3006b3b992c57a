use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use walkguide_core::engine::EngineConfig;
use walkguide_core::metrics::F1Average;
use walkguide_core::tap::{TapConfig, TrainOptions};

/// Metric options.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub average: F1Average,
}

/// One JSON document for every command. All sections and fields are optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub engine: EngineConfig,
    pub tap: TapConfig,
    pub train: TrainOptions,
    pub metrics: MetricsConfig,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config: CliConfig = match path {
            None => CliConfig::default(),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
        };
        Ok(config)
    }

    /// Checks every section, plus agreement between engine and gate.
    pub fn validate(&self) -> Result<()> {
        self.tap.validate().context("invalid tap config")?;
        self.engine.validate().context("invalid engine config")?;
        if self.tap.n_history != self.engine.n_history {
            bail!(
                "tap.n_history ({}) differs from engine.n_history ({})",
                self.tap.n_history,
                self.engine.n_history
            );
        }
        if self.train.epochs == 0 || !(self.train.lr > 0.0) {
            bail!("train.epochs and train.lr must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<CliConfig>(r#"{"engine": {"fps": 2.0, "speed": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("speed"));
        assert!(serde_json::from_str::<CliConfig>(r#"{"colour": 1}"#).is_err());
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: CliConfig = serde_json::from_str(r#"{"engine": {"cooldown_dedup_ms": 100}, "tap": {"seed": 3}}"#).unwrap();
        assert_eq!(c.engine.cooldown_dedup_ms, 100);
        assert_eq!(c.engine.fps, 2.0);
        assert_eq!(c.tap.seed, 3);
        assert_eq!(c.tap.input_hw, 64);
        c.validate().unwrap();
    }

    #[test]
    fn mismatched_history_fails_validation() {
        let c: CliConfig = serde_json::from_str(r#"{"tap": {"n_history": 2}}"#).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("n_history"));
    }
}
