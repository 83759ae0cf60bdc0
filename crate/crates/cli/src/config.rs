use std::fs;
use std::path::{Path, PathBuf};

use distnet::features::Pollutant;
use distnet::models::{ModelConfig, ModelKind};
use distnet::training::TrainConfig;
use distnet::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a `train` or `sweep` run needs. Loaded from JSON; missing keys
/// take their defaults and command-line flags override both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset `manifest.json`. Relative paths in a config file are taken
    /// from the file's directory.
    pub manifest: Option<PathBuf>,
    /// Overrides `model.kind`.
    pub kind: ModelKind,
    pub pollutant: Pollutant,
    pub out: Option<PathBuf>,
    /// Copied into `model.seed` and `train.seed`.
    pub seed: u64,
    pub validation_fraction: f64,
    /// Stride of training and validation windows; test windows always slide by one hour.
    pub train_stride: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            kind: ModelKind::Distnet,
            pollutant: Pollutant::Pm25,
            out: None,
            seed: 0,
            validation_fraction: 0.1,
            train_stride: 1,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Propagates the shared fields and checks the result.
    pub fn resolve(mut self) -> Result<Self> {
        self.model.kind = self.kind;
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self.model.validate()?;
        self.train.validate()?;
        if self.train_stride == 0 {
            return Err(Error::Config("train_stride must be at least 1".into()));
        }
        match &self.manifest {
            None => return Err(Error::Config("no dataset manifest given".into())),
            Some(m) if !m.is_file() => {
                return Err(Error::Config(format!(
                    "manifest {} does not exist",
                    m.display()
                )))
            }
            Some(_) => {}
        }
        Ok(self)
    }
}
