//! Rebuilding app state from a relay receive log.

use spatial_relay_core::apps::{build_app, replay_into, App, AppDriver, AppSection};
use spatial_relay_core::config::{Config, ConfigError};
use spatial_relay_core::gesture::Recognizer;
use spatial_relay_core::relay::{ReplayError, Session};
use spatial_relay_core::BufferParams;
use thiserror::Error;

use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum ReplayFailure {
    #[error(transparent)]
    CorruptLog(#[from] ReplayError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Which app the log is replayed into.
pub enum AppSource<'a> {
    /// Default arena settings.
    Default,
    Config(&'a Config),
    /// The scenario's app, run through the scenario's full duration.
    Scenario(&'a Scenario),
}

impl AppSource<'_> {
    fn build(&self) -> Result<Box<dyn App>, ReplayFailure> {
        Ok(match self {
            AppSource::Default => build_app(&AppSection::default(), BufferParams::default(), Recognizer::default())
                .map_err(ConfigError::from)?,
            AppSource::Config(c) => c.build_app()?.0,
            AppSource::Scenario(s) => s.build_app()?,
        })
    }
}

/// Final app state after re-driving `log`. Without a scenario the run ends at
/// the last logged event; an empty log gives the app's initial state.
pub fn replay_log(log: &[u8], source: &AppSource) -> Result<serde_json::Value, ReplayFailure> {
    let (_, deliveries) = Session::from_replay(log)?;
    let app = source.build()?;
    let until = match source {
        AppSource::Scenario(s) => Some(s.duration_ms),
        _ => deliveries.last().map(|d| d.server_ts_ms()),
    };
    Ok(match until {
        Some(t) => replay_into(app, &deliveries, t).snapshot(),
        None => AppDriver::new(app).snapshot(),
    })
}
