//! Optional TOML defaults shared by all subcommands.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use orens::dynamics::Envelope;
use orens::estimator::BayesConfig;
use serde::Deserialize;

use crate::EngineName;

pub const CONFIG_FILE: &str = "orens.toml";

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    /// Worker threads for benchmark sweeps; `ORENS_THREADS` still caps it.
    pub threads: Option<usize>,
    pub optimize: OptimizeDefaults,
    pub simulate: SimulateDefaults,
    pub bayes: Option<BayesConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeDefaults {
    pub restarts: Option<usize>,
    pub max_alpha: Option<f64>,
    pub max_iters: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateDefaults {
    /// `ideal`, `device` or a path to a noise JSON file.
    pub noise: Option<String>,
    pub shots: Option<u64>,
    pub engine: Option<EngineName>,
    pub envelope: Option<Envelope>,
}

#[derive(Clone, Debug, Default)]
pub struct LoadedConfig {
    pub config: Config,
    pub path: Option<PathBuf>,
}

/// `--config` if given (must exist), else `./orens.toml` if present, else
/// built-in defaults.
pub fn load(flag: Option<&Path>) -> Result<LoadedConfig> {
    let path = match flag {
        Some(p) => p.to_path_buf(),
        None => {
            let local = PathBuf::from(CONFIG_FILE);
            if !local.is_file() {
                return Ok(LoadedConfig::default());
            }
            local
        }
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok(LoadedConfig {
        config,
        path: Some(path),
    })
}
