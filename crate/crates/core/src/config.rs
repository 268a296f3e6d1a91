//! Top-level TOML configuration shared by every tool.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::engine::{DesignPoint, EngineConfig, EngineConstants, MapCoefficients, NoiseSpec};
use crate::error::{Error, Result};
use crate::linearize::LinearizeOptions;
use crate::mm_fdi::DiagnosisConfig;

/// Every tunable of the toolkit; missing sections fall back to the calibrated defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub constants: EngineConstants,
    pub design: DesignPoint,
    pub maps: MapCoefficients,
    pub noise: NoiseSpec,
    pub linearize: LinearizeOptions,
    pub diagnosis: DiagnosisConfig,
    pub baselines: BaselineConfig,
}

impl Config {
    pub fn engine(&self) -> EngineConfig {
        EngineConfig { constants: self.constants.clone(), design: self.design.clone(), maps: self.maps.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.noise.validate()?;
        self.linearize.validate()?;
        self.diagnosis.validate()?;
        let b = &self.baselines;
        if !(b.period > 0.0 && b.jitter > 0.0 && b.sigma_points.alpha > 0.0) {
            return Err(Error::InvalidInput("baselines: period, jitter and alpha must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes to TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml("", Path::new("x.toml")).unwrap(), Config::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = Config::default();
        cfg.diagnosis.bias_pct = 2.5;
        cfg.noise.scale = 20.0;
        let back = Config::from_toml(&cfg.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::from_toml("[diagnosis]\nbias = 3.0\n", Path::new("x.toml")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
