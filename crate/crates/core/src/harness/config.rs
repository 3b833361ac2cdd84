use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bagdata::SynthConfig;
use crate::contrastive::ContrastiveConfig;
use crate::crossbag::AugmentConfig;
use crate::error::{Error, Result};
use crate::milmodel::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// SGD learning rate.
    pub lr: f64,
    /// Passes over the training split; one step per bag.
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-2, epochs: 10 }
    }
}

/// Everything a run depends on. Serialized verbatim into the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; per-component streams derive from it.
    pub seed: u64,
    /// Cross-validation folds (ignored when `test` is set).
    pub folds: usize,
    /// Synthetic training data (or the whole cross-validated set).
    pub data: SynthConfig,
    /// MBAG1 file used instead of `data` when set.
    pub data_file: Option<String>,
    /// Separate synthetic test set; switches from k-fold to holdout.
    pub test: Option<SynthConfig>,
    pub model: ModelConfig,
    pub augment: AugmentConfig,
    pub contrastive: ContrastiveConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            folds: 5,
            data: SynthConfig::default(),
            data_file: None,
            test: None,
            model: ModelConfig::default(),
            augment: AugmentConfig::default(),
            contrastive: ContrastiveConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.test.is_none() && self.folds < 2 {
            return Err(Error::Config(format!("folds must be ≥ 2, got {}", self.folds)));
        }
        if self.data_file.is_none() {
            self.data.validate()?;
        }
        if let Some(t) = &self.test {
            t.validate()?;
            if self.data_file.is_none() && t.d != self.data.d {
                return Err(Error::Config(format!("test d = {} but train d = {}", t.d, self.data.d)));
            }
        }
        self.model.validate()?;
        self.augment.validate()?;
        self.contrastive.validate()?;
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.train.lr)));
        }
        if self.train.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.contrastive.bank_size, 256);
        assert_eq!(cfg.model.hidden, 64);
    }

    #[test]
    fn single_fold_is_rejected() {
        assert!(matches!(RunConfig::from_toml("folds = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[train]\nlearning_rate = 0.1").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.augment.views = 2;
        cfg.contrastive.alpha = 0.0;
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }
}
