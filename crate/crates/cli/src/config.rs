//! Run configuration: a TOML file whose fields are overridden by flags.

use std::path::{Path, PathBuf};

use fcul_core::inverse::ResetPolicy;
use fcul_core::sim::{RunOptions, VariantSelection};
use fcul_core::Precision;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Every field is optional so a file may set any subset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub gamma: Option<f64>,
    pub sigma2: Option<f64>,
    pub precision: Option<Precision>,
    pub variant: Option<VariantSelection>,
    pub rank: Option<usize>,
    pub reset_every: Option<u32>,
    pub drift_threshold: Option<f64>,
    pub condition_threshold: Option<f64>,
    pub audit_every: Option<u32>,
    pub scenario: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` win.
    pub fn overlay(self, other: Config) -> Config {
        Config {
            gamma: other.gamma.or(self.gamma),
            sigma2: other.sigma2.or(self.sigma2),
            precision: other.precision.or(self.precision),
            variant: other.variant.or(self.variant),
            rank: other.rank.or(self.rank),
            reset_every: other.reset_every.or(self.reset_every),
            drift_threshold: other.drift_threshold.or(self.drift_threshold),
            condition_threshold: other.condition_threshold.or(self.condition_threshold),
            audit_every: other.audit_every.or(self.audit_every),
            scenario: other.scenario.or(self.scenario),
            features: other.features.or(self.features),
            out: other.out.or(self.out),
            seed: other.seed.or(self.seed),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let positive = [
            ("gamma", self.gamma),
            ("sigma2", self.sigma2),
            ("drift_threshold", self.drift_threshold),
            ("condition_threshold", self.condition_threshold),
        ];
        for (name, value) in positive {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Usage(format!("{name} must be positive and finite, got {v}")));
                }
            }
        }
        if self.rank == Some(0) {
            return Err(CliError::Usage("rank must be at least 1".into()));
        }
        Ok(())
    }

    pub fn run_options(&self) -> RunOptions {
        let base = RunOptions::default();
        let policy = ResetPolicy::default();
        RunOptions {
            sigma2: self.sigma2.unwrap_or(base.sigma2),
            policy: ResetPolicy {
                drift_threshold: self.drift_threshold.unwrap_or(policy.drift_threshold),
                audit_every: self.audit_every.unwrap_or(policy.audit_every),
                condition_threshold: self.condition_threshold.unwrap_or(policy.condition_threshold),
            },
            rank: self.rank.unwrap_or(base.rank),
            reset_every: self.reset_every.unwrap_or(base.reset_every),
            ..base
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Config = toml::from_str("gamma = 2.0\nprecision = \"f32\"\nrank = 4").unwrap();
        let flags = Config {
            gamma: Some(0.5),
            ..Config::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.gamma, Some(0.5));
        assert_eq!(merged.precision, Some(Precision::Single));
        assert_eq!(merged.run_options().rank, 4);
    }

    #[test]
    fn rejects_nonpositive_values() {
        for bad in ["gamma = 0.0", "sigma2 = -1.0", "drift_threshold = 0.0", "rank = 0"] {
            let c: Config = toml::from_str(bad).unwrap();
            assert!(c.validate().is_err(), "{bad}");
        }
        assert!(toml::from_str::<Config>("nonsense = 1").is_err());
    }
}
