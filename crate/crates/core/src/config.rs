//! Server and app configuration, loaded from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apps::{build_app, App, AppConfigError, AppSection};
use crate::compensation::BufferParams;
use crate::gesture::{Recognizer, DEFAULT_ACCEPT_THRESHOLD};
use crate::policy::{PolicyError, PolicyFiles};
use crate::protocol::InputThresholds;

pub const DEFAULT_PORT: u16 = 9870;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    App(#[from] AppConfigError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: String,
    pub port: u16,
    /// Wait for the application to connect over the websocket instead of
    /// running the configured app inside the relay process.
    pub external_app: bool,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self { bind: "127.0.0.1".into(), port: DEFAULT_PORT, external_app: false }
    }
}

impl ServerSection {
    pub fn addr(&self) -> String {
        format!("{}:{}", self.bind, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GestureSection {
    pub accept_threshold: f64,
    /// Optional JSON template set replacing the built-in chevrons.
    pub templates: Option<PathBuf>,
}

impl Default for GestureSection {
    fn default() -> Self {
        Self { accept_threshold: DEFAULT_ACCEPT_THRESHOLD, templates: None }
    }
}

/// Hot-reloadable role and ban lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyFilesSection {
    pub roles: Option<PathBuf>,
    pub bans: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerSection,
    pub protocol: InputThresholds,
    pub camera_buffer: BufferParams,
    pub gesture: GestureSection,
    pub app: AppSection,
    pub policy_files: PolicyFilesSection,
    /// Directory relative paths are resolved against; set by [`Config::load`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self, ConfigError> {
        let c: Config = serde_json::from_slice(bytes)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut c = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_slice(&bytes)?
        } else {
            let text = String::from_utf8(bytes).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Self::from_toml_str(&text)?
        };
        c.base_dir = path.parent().map(Path::to_path_buf);
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.camera_buffer.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let t = &self.protocol;
        if !(t.motion_threshold > 0.0 && t.motion_threshold <= 1.0) {
            return Err(ConfigError::Invalid("protocol.motion_threshold must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gesture.accept_threshold) {
            return Err(ConfigError::Invalid("gesture.accept_threshold must be in [0, 1]".into()));
        }
        self.app.policy.gate.validate()?;
        Ok(())
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn recognizer(&self) -> Result<Recognizer, ConfigError> {
        let threshold = self.gesture.accept_threshold;
        match &self.gesture.templates {
            None => Ok(Recognizer::builtin(threshold)),
            Some(p) => {
                let path = self.resolve_path(p);
                let bytes = std::fs::read(&path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                Recognizer::from_json(&bytes, threshold).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
        }
    }

    pub fn policy_files(&self) -> PolicyFiles {
        let f = &self.policy_files;
        PolicyFiles::new(
            f.roles.as_deref().map(|p| self.resolve_path(p)),
            f.bans.as_deref().map(|p| self.resolve_path(p)),
        )
    }

    /// Builds the configured app with role and ban files applied.
    pub fn build_app(&self) -> Result<(Box<dyn App>, PolicyFiles), ConfigError> {
        let mut app = build_app(&self.app, self.camera_buffer, self.recognizer()?)?;
        let mut files = self.policy_files();
        let gk = app.gatekeeper_mut();
        files.reload_if_changed(&mut gk.roles, &mut gk.gate)?;
        Ok((app, files))
    }
}
