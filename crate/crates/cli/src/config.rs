//! TOML configuration with environment overrides.

use std::path::{Path, PathBuf};

use featsplat::distill::TrainConfig;
use featsplat::physics::{InfillConfig, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerConfig,
    pub data: DataConfig,
    pub sim: SimConfig,
    pub infill: InfillConfig,
    pub simulate: SimulateDefaults,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { host: "127.0.0.1".into(), port: 7878 }
    }
}

/// Input files. `vocab` and `cameras` fall back to the files inside `dataset`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub scene: Option<PathBuf>,
    pub head: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

impl DataConfig {
    pub fn vocab_path(&self) -> Option<PathBuf> {
        self.vocab.clone().or_else(|| self.dataset.as_ref().map(|d| d.join("vocab.json")))
    }

    pub fn cameras_path(&self) -> Option<PathBuf> {
        self.cameras.clone().or_else(|| self.dataset.as_ref().map(|d| d.join("cameras.json")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateDefaults {
    pub frames: usize,
    /// Material for Gaussians that match no rigid alias.
    pub material: String,
}

impl Default for SimulateDefaults {
    fn default() -> Self {
        SimulateDefaults { frames: 60, material: "elastic".into() }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` (defaults when `None`) and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Config::from_toml(&text)?
            }
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Applies `FEATSPLAT_*` overrides looked up through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), CliError> {
        if let Some(h) = var("FEATSPLAT_HOST") {
            self.server.host = h;
        }
        if let Some(p) = var("FEATSPLAT_PORT") {
            self.server.port = p.parse().map_err(|_| CliError::Config(format!("FEATSPLAT_PORT={p:?} is not a port number")))?;
        }
        let paths: [(&str, &mut Option<PathBuf>); 5] = [
            ("FEATSPLAT_SCENE", &mut self.data.scene),
            ("FEATSPLAT_HEAD", &mut self.data.head),
            ("FEATSPLAT_VOCAB", &mut self.data.vocab),
            ("FEATSPLAT_CAMERAS", &mut self.data.cameras),
            ("FEATSPLAT_DATASET", &mut self.data.dataset),
        ];
        for (key, slot) in paths {
            if let Some(v) = var(key) {
                *slot = Some(PathBuf::from(v));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_file_parses() {
        let cfg = Config::from_toml(include_str!("../featsplat.toml")).unwrap();
        assert_eq!(cfg.server.port, 7878);
        assert_eq!(cfg.sim.grid_res, 48);
        assert_eq!(cfg.train.iterations, 3000);
        // untouched fields keep their defaults
        assert_eq!(cfg.train.lambda, TrainConfig::default().lambda);
    }

    #[test]
    fn env_overrides_file() {
        let mut cfg = Config::from_toml("[server]\nport = 9000\n[data]\ndataset = \"d\"\n").unwrap();
        cfg.apply_env(|k| match k {
            "FEATSPLAT_PORT" => Some("9100".into()),
            "FEATSPLAT_SCENE" => Some("s.fspl".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.server.port, 9100);
        assert_eq!(cfg.data.scene, Some(PathBuf::from("s.fspl")));
        assert_eq!(cfg.data.vocab_path(), Some(PathBuf::from("d/vocab.json")));
    }

    #[test]
    fn bad_port_and_unknown_key_rejected() {
        let mut cfg = Config::default();
        assert!(cfg.apply_env(|k| (k == "FEATSPLAT_PORT").then(|| "http".into())).is_err());
        assert!(Config::from_toml("[server]\nprot = 1\n").is_err());
    }
}
