//! TOML configuration with `[model]`, `[em]` and `[scenario]` tables.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::assoc::EmConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::sim::scenario::ScenarioSpec;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: ModelConfig,
    pub em: EmConfig,
    pub scenario: ScenarioSpec,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolved()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Takes the subobject count and sample time from the scenario and
    /// validates everything.
    pub fn resolved(mut self) -> Result<Self> {
        self.model.n_subobjects = self.scenario.shape.n_subobjects();
        self.model.sample_time = self.scenario.sample_time;
        self.model.validate()?;
        self.em.validate()?;
        self.scenario.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::ShapeKind;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default().resolved().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_override() {
        let cfg = Config::from_toml(
            r#"
            [em]
            random_restarts = 7

            [model.reduction]
            max_components = 4

            [scenario]
            gamma0 = 20.0
            stationary = true
            "#,
        )
        .unwrap();
        assert_eq!(cfg.em.random_restarts, 7);
        assert_eq!(cfg.model.reduction.max_components, 4);
        assert_eq!(cfg.scenario.gamma0, 20.0);
        assert_eq!(cfg.scenario.shape.kind, ShapeKind::Plane);
        assert!(Config::from_toml("[em]\ntolerance = -1.0").is_err());
    }
}
