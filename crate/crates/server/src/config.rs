use std::path::{Path, PathBuf};

use qsql_core::backend::BackendKind;
use qsql_core::bench::ORACLE;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
}

/// Service settings. Every key can be overridden by an environment variable
/// named `QSQL_` plus the upper-cased key.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub port: u16,
    /// Backends requests may name. `oracle` selects the dense simulator.
    pub backends: Vec<String>,
    pub default_epsilon: f64,
    /// Directory with the web UI bundle served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        let mut backends = BackendKind::available_names();
        backends.push(ORACLE.to_string());
        Config {
            port: 8080,
            backends,
            default_epsilon: 1e-12,
            static_dir: None,
        }
    }
}

impl Config {
    /// Reads the JSON file if given, applies environment overrides and
    /// validates the result.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let env: Vec<(String, String)> = std::env::vars().collect();
        Self::load_with_env(path, &env)
    }

    pub fn load_with_env(path: Option<&Path>, env: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?
            }
            None => Config::default(),
        };
        for (key, value) in env {
            let bad = |message: String| ConfigError::Value {
                key: key.clone(),
                message,
            };
            match key.as_str() {
                "QSQL_PORT" => config.port = value.parse().map_err(|e| bad(format!("{e}")))?,
                "QSQL_BACKENDS" => {
                    config.backends = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                "QSQL_DEFAULT_EPSILON" => {
                    config.default_epsilon = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "QSQL_STATIC_DIR" => config.static_dir = Some(PathBuf::from(value)),
                _ => {}
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.backends.is_empty() {
            return Err(ConfigError::Value {
                key: "backends".into(),
                message: "at least one backend is required".into(),
            });
        }
        for name in &self.backends {
            if name != ORACLE {
                name.parse::<BackendKind>().map_err(|e| ConfigError::Value {
                    key: "backends".into(),
                    message: e.to_string(),
                })?;
            }
        }
        if !(self.default_epsilon >= 0.0 && self.default_epsilon.is_finite()) {
            return Err(ConfigError::Value {
                key: "default_epsilon".into(),
                message: "must be a finite value >= 0".into(),
            });
        }
        Ok(())
    }
}
