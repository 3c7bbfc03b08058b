//! Scenario config files.

use std::fs;
use std::path::{Path, PathBuf};

use sar_core::scenarios::{builtin, ScenarioError, ScenarioSpec, BUILTIN_NAMES};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: invalid scenario: {source}")]
    Invalid {
        origin: String,
        source: ScenarioError,
    },
    #[error("unknown scenario {name:?}; available: {}", BUILTIN_NAMES.join(", "))]
    UnknownScenario { name: String },
    #[error("no config file or built-in scenario named {target:?}; built-ins: {}", BUILTIN_NAMES.join(", "))]
    NotFound { target: String },
}

pub fn parse_spec(text: &str, origin: &str) -> Result<ScenarioSpec, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    })
}

pub fn load_spec(path: &Path) -> Result<ScenarioSpec, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_spec(&text, &path.display().to_string())
}

pub fn to_toml(spec: &ScenarioSpec) -> String {
    toml::to_string(spec).expect("scenario specs always serialize")
}

/// Looks `target` up as a file, then as a file with a `.toml` extension,
/// then as a built-in scenario name.
pub fn resolve(target: &str) -> Result<(ScenarioSpec, String), ConfigError> {
    let path = Path::new(target);
    if path.is_file() {
        return Ok((load_spec(path)?, target.to_string()));
    }
    let with_ext = path.with_extension("toml");
    if with_ext.is_file() {
        return Ok((load_spec(&with_ext)?, with_ext.display().to_string()));
    }
    builtin(target)
        .map(|spec| (spec, format!("built-in {target}")))
        .ok_or_else(|| ConfigError::NotFound {
            target: target.to_string(),
        })
}

pub fn export(name: &str, path: &Path) -> Result<(), ConfigError> {
    let spec = builtin(name).ok_or_else(|| ConfigError::UnknownScenario {
        name: name.to_string(),
    })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| ConfigError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, to_toml(&spec)).map_err(|source| ConfigError::Write {
        path: path.to_path_buf(),
        source,
    })
}
