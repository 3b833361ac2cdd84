use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    /// InfoNCE temperature.
    pub tau_bag: f64,
    /// Student group temperature.
    pub tau_s: f64,
    /// Teacher (sharpening) temperature.
    pub tau_t: f64,
    pub center_momentum: f64,
    /// Memory bank capacity `k`.
    pub bank_size: usize,
    /// Prototype count `C`.
    pub prototypes: usize,
    /// Teacher EMA momentum `μ`.
    pub ema: f64,
    /// Weight of the bag-level loss.
    pub alpha: f64,
    /// Weight of the group-level loss.
    pub beta: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            tau_bag: 0.07,
            tau_s: 0.1,
            tau_t: 0.04,
            center_momentum: 0.9,
            bank_size: 256,
            prototypes: 8,
            ema: 0.996,
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, t) in [("tau_bag", self.tau_bag), ("tau_s", self.tau_s), ("tau_t", self.tau_t)] {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("{name} must be positive, got {t}"));
            }
        }
        for (name, m) in [("ema", self.ema), ("center_momentum", self.center_momentum)] {
            if !(0.0..=1.0).contains(&m) {
                return bad(format!("{name} must lie in [0, 1], got {m}"));
            }
        }
        if self.prototypes == 0 {
            return bad("prototypes must be ≥ 1".into());
        }
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("{name} must be ≥ 0, got {w}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_bad_values_do_not() {
        assert!(ContrastiveConfig::default().validate().is_ok());
        let bad = [
            ContrastiveConfig { tau_t: 0.0, ..Default::default() },
            ContrastiveConfig { ema: 1.5, ..Default::default() },
            ContrastiveConfig { prototypes: 0, ..Default::default() },
            ContrastiveConfig { alpha: -1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
