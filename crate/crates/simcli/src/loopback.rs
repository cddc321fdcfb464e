//! The same scripted viewers, but talking to a real relay over loopback
//! websockets. Time is still virtual: the harness moves a manual clock and
//! waits for the relay to take in each frame before moving on.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use spatial_relay_core::protocol::Message;
use spatial_relay_core::Config;
use spatial_relay_server::{ClientError, ManualClock, RelayHandle, RelayServer, ServerError, TickMode, ViewerClient};
use thiserror::Error;

use crate::scenario::{Scenario, ScenarioError};
use crate::viewer::{Plan, ScriptedViewer};

/// Longest the harness waits for the relay to catch up before giving up.
const CATCH_UP: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum LoopbackError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("relay did not catch up: {0}")]
    Stalled(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoopbackReport {
    pub clients: usize,
    pub virtual_ms: i64,
    pub wall_ms: u128,
    /// Mouse events the clients put on the wire.
    pub sent: u64,
    pub skipped: u64,
    /// Mouse events the relay read off the wire.
    pub received: u64,
    pub admitted: u64,
    pub rejected: u64,
    pub dropped: u64,
    pub protocol_errors: u64,
    pub slow_consumers: u64,
}

impl LoopbackReport {
    pub fn reconciles(&self) -> bool {
        self.sent == self.received && self.sent == self.admitted + self.rejected + self.dropped
    }
}

pub async fn run_loopback(scenario: &Scenario) -> Result<LoopbackReport, LoopbackError> {
    scenario.validate()?;
    let started = Instant::now();
    let mut config = Config::default();
    config.server.port = 0;
    config.camera_buffer = scenario.camera_buffer;
    config.app = scenario.app_section();
    let clock = ManualClock::new(0);
    let server = RelayServer::bind(&config, Arc::new(clock.clone()), TickMode::Manual).await?;
    let handle = server.handle();
    let url = server.url();

    let mut clients = Vec::with_capacity(scenario.viewers.len());
    let mut viewers = Vec::with_capacity(scenario.viewers.len());
    for (i, spec) in scenario.viewers.iter().enumerate() {
        clients.push(ViewerClient::join(&url, &spec.user).await?);
        viewers.push(ScriptedViewer::new(spec, scenario.seed, i));
    }
    let mut frames = scenario.viewers.len() as u64;

    // Viewers aim at what a fresh copy of the app shows; the relay's own app
    // state is not visible from outside.
    let reference = scenario.build_app()?;
    let landmarks = reference.landmarks();
    let rig = scenario.rig();
    let mut report = LoopbackReport { clients: clients.len(), ..LoopbackReport::default() };

    for step in scenario.timeline() {
        clock.set(step.at_ms);
        handle.tick().await?;
        let planned = match viewers[step.viewer].plan(step.action, step.at_ms, &rig, &|_| landmarks.clone()) {
            Plan::Send(p) => p,
            Plan::Skip(_) => {
                report.skipped += 1;
                continue;
            }
        };
        if matches!(planned.message, Message::MouseEvent(_)) {
            report.sent += 1;
        }
        clients[step.viewer].send(planned.message).await?;
        frames += 1;
        wait_for(&handle, |s| s.frames_in >= frames).await?;
    }
    clock.set(scenario.duration_ms);
    handle.tick().await?;
    for c in clients {
        c.close().await?;
    }
    let stats = wait_for(&handle, |s| s.open_connections == 0).await?;
    server.shutdown().await;

    report.virtual_ms = scenario.duration_ms;
    report.wall_ms = started.elapsed().as_millis();
    report.received = stats.relay.events_received;
    report.admitted = stats.app_admitted;
    report.rejected = stats.app_rejected;
    report.dropped = stats.relay.events_dropped;
    report.protocol_errors = stats.relay.protocol_errors;
    report.slow_consumers = stats.slow_consumers;
    Ok(report)
}

async fn wait_for(
    handle: &RelayHandle,
    done: impl Fn(&spatial_relay_server::ServerStats) -> bool,
) -> Result<spatial_relay_server::ServerStats, LoopbackError> {
    let deadline = Instant::now() + CATCH_UP;
    loop {
        let stats = handle.stats().await?;
        if done(&stats) {
            return Ok(stats);
        }
        if Instant::now() > deadline {
            return Err(LoopbackError::Stalled(format!("{stats:?}")));
        }
        tokio::time::sleep(Duration::from_micros(200)).await;
    }
}
