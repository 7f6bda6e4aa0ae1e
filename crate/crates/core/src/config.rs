//! TOML run configuration.
//!
//! Every key is optional; missing keys take the defaults of [`ScisConfig`].
//!
//! ```toml
//! seed = 7
//! cold_start = false
//!
//! [dim]
//! epochs = 100
//! batch_size = 128
//! lr = 0.001
//!
//! [sse]
//! epsilon = 0.001
//! alpha = 0.05
//! beta = 0.01
//! k = 20
//! lambda = 130.0   # also used by training
//! n0 = 500
//! nv = 500
//! variant = "paper_appendix"
//! ```

use std::path::Path;

use crate::orchestrator::ScisConfig;
use thiserror::Error;

pub const SEED_ENV: &str = "SCIS_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{SEED_ENV} is not an unsigned integer: `{0}`")]
    BadSeed(String),
}

pub fn parse_config(text: &str) -> Result<ScisConfig, ConfigError> {
    Ok(toml::from_str(text)?)
}

pub fn load_config(path: &Path) -> Result<ScisConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Reads the seed override from the environment, if set.
pub fn env_seed() -> Result<Option<u64>, ConfigError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| ConfigError::BadSeed(v)),
        Err(_) => Ok(None),
    }
}

pub fn to_toml(cfg: &ScisConfig) -> String {
    toml::to_string(cfg).expect("config is always representable")
}
