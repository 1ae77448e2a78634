use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::DEFAULT_SUBSTEPS_PER_YEAR;

/// Optimizer and architecture settings for a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub substeps_per_year: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub fine_tune_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 2000,
            substeps_per_year: DEFAULT_SUBSTEPS_PER_YEAR,
            hidden: vec![64],
            seed: 0,
            fine_tune_epochs: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!(
                "betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.substeps_per_year == 0 {
            return bad("substeps_per_year must be at least 1".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!(
                "hidden widths must be non-empty and positive, got {:?}",
                self.hidden
            ));
        }
        Ok(())
    }

    /// Reads a `.toml` or `.json` config file; missing fields take defaults.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
            _ => serde_json::from_str(&text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.epochs, 2000);
        assert_eq!(cfg.fine_tune_epochs, 200);
        assert_eq!(cfg.hidden, vec![64]);
    }

    #[test]
    fn rejects_invalid() {
        let cases = [
            TrainConfig {
                learning_rate: -1.0,
                ..Default::default()
            },
            TrainConfig {
                beta1: 1.0,
                ..Default::default()
            },
            TrainConfig {
                epsilon: 0.0,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                hidden: vec![],
                ..Default::default()
            },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn reads_toml_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("cfg.toml");
        std::fs::write(&toml_path, "epochs = 10\nhidden = [8]\nseed = 3\n").unwrap();
        let cfg = TrainConfig::from_path(&toml_path).unwrap();
        assert_eq!((cfg.epochs, cfg.hidden.clone(), cfg.seed), (10, vec![8], 3));
        assert_eq!(cfg.learning_rate, 0.01);

        let json_path = dir.path().join("cfg.json");
        std::fs::write(&json_path, r#"{"learning_rate": 0.05}"#).unwrap();
        assert_eq!(TrainConfig::from_path(&json_path).unwrap().learning_rate, 0.05);

        std::fs::write(&json_path, r#"{"learning_rat": 0.05}"#).unwrap();
        assert!(TrainConfig::from_path(&json_path).is_err());
    }
}
