//! TOML client configuration shared by the device and caregiver roles.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voxsearch_core::mfcc::MfccConfig;

pub const DEFAULT_CONFIG_FILE: &str = "voxsearch.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub server_url: String,
    pub key_file: PathBuf,
    pub device_id: String,
    pub labels_file: PathBuf,
    pub thresholds_file: PathBuf,
    pub mfcc: MfccConfig,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            server_url: "http://127.0.0.1:8700".into(),
            key_file: "voxsearch-keys.json".into(),
            device_id: "home-device".into(),
            labels_file: "labels.json".into(),
            thresholds_file: "thresholds.json".into(),
            mfcc: MfccConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
}

impl ClientConfig {
    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: ClientConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            for p in [&mut cfg.key_file, &mut cfg.labels_file, &mut cfg.thresholds_file] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.mfcc.validate().map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Loads `path`, or the defaults when `path` is the implicit default
    /// file and it does not exist.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None if Path::new(DEFAULT_CONFIG_FILE).exists() => {
                Self::load(Path::new(DEFAULT_CONFIG_FILE))
            }
            None => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "server_url = \"http://127.0.0.1:9\"\nkey_file = \"k.json\"\n[mfcc]\nnum_filters = 26\n",
        )
        .unwrap();
        let cfg = ClientConfig::load(&path).unwrap();
        assert_eq!(cfg.key_file, dir.path().join("k.json"));
        assert_eq!(cfg.server_url, "http://127.0.0.1:9");
        assert_eq!(cfg.device_id, "home-device");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "sever_url = \"typo\"\n").unwrap();
        assert!(matches!(ClientConfig::load(&path), Err(ConfigError::Parse { .. })));
    }
}
