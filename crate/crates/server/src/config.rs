use serde::Deserialize;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use thiserror::Error;
use viva_core::clock::{parse_timestamp, Timestamp};
use viva_core::engine::LiveConfig;

pub const ENV_LISTEN: &str = "VIVA_LISTEN";
pub const ENV_STORE_PATH: &str = "VIVA_STORE_PATH";
pub const ENV_TOKENS_PATH: &str = "VIVA_TOKENS_PATH";

#[derive(Debug, Error)]
pub enum ServiceConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid service config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value {value:?} for {key}")]
    Invalid { key: &'static str, value: String },
}

/// Service settings, loaded from TOML with environment overrides.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Durable transcript store; in memory when absent.
    pub store_path: Option<PathBuf>,
    /// TOML file of cohort tokens.
    pub tokens_path: Option<PathBuf>,
    /// Alternative injection rule set.
    pub rules_path: Option<PathBuf>,
    pub max_submission_bytes: usize,
    /// Interval of the answer-timeout sweep.
    pub reaper_interval_ms: u64,
    pub live: Option<LiveConfig>,
    pub clock: ClockSettings,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockSettings {
    /// When set, every session reads a private stepping clock starting here,
    /// which makes transcripts reproducible.
    pub deterministic_start: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            store_path: None,
            tokens_path: None,
            rules_path: None,
            max_submission_bytes: viva_core::guard::DEFAULT_MAX_SUBMISSION_BYTES,
            reaper_interval_ms: 1000,
            live: None,
            clock: ClockSettings::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(source: &str) -> Result<Self, ServiceConfigError> {
        Ok(toml::from_str(source)?)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceConfigError> {
        let source = std::fs::read_to_string(path)
            .map_err(|source| ServiceConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&source)
    }

    /// Applies `VIVA_*` environment overrides. The live API key is only ever
    /// read from the environment.
    pub fn apply_env(mut self) -> Result<Self, ServiceConfigError> {
        self.apply_overrides(|key| std::env::var(key).ok())?;
        Ok(self)
    }

    pub fn apply_overrides(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ServiceConfigError> {
        if let Some(listen) = get(ENV_LISTEN) {
            self.listen = listen.parse().map_err(|_| ServiceConfigError::Invalid { key: ENV_LISTEN, value: listen })?;
        }
        if let Some(path) = get(ENV_STORE_PATH) {
            self.store_path = Some(path.into());
        }
        if let Some(path) = get(ENV_TOKENS_PATH) {
            self.tokens_path = Some(path.into());
        }
        if let Some(live) = self.live.take() {
            let key = get(viva_core::engine::ENV_API_KEY);
            self.live = Some(LiveConfig { api_key: key.or(live.api_key.clone()), ..live });
        }
        Ok(())
    }

    pub fn deterministic_start(&self) -> Result<Option<Timestamp>, ServiceConfigError> {
        match &self.clock.deterministic_start {
            None => Ok(None),
            Some(s) => parse_timestamp(s)
                .map(Some)
                .ok_or_else(|| ServiceConfigError::Invalid { key: "clock.deterministic_start", value: s.clone() }),
        }
    }
}
