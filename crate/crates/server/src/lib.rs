//! Websocket transport for the relay session.
//!
//! One actor task owns the [`Session`](spatial_relay_core::Session) and, unless
//! the config asks for an external app, the configured reference app. Each
//! socket gets a reader and a writer task that talk to the actor over
//! channels, so all relay state changes happen in one place and in one order.

pub mod client;
pub mod clock;
mod hub;
mod net;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use spatial_relay_core::apps::AppDriver;
use spatial_relay_core::config::{Config, ConfigError};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;

pub use client::{ClientError, ViewerClient};
pub use clock::{Clock, ManualClock, MonotonicClock};
pub use hub::{RelayHandle, ServerStats, IN_PROCESS_APP};
pub use net::MAX_MESSAGE_BYTES;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("relay has stopped")]
    Stopped,
}

/// How the in-process app's clock advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickMode {
    /// A timer ticks the app every camera-buffer period.
    Interval,
    /// Ticks happen only through [`RelayHandle::tick`]. Used with a
    /// [`ManualClock`] for virtual-time runs.
    Manual,
}

const HUB_QUEUE: usize = 4096;

pub struct RelayServer {
    addr: SocketAddr,
    handle: RelayHandle,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl RelayServer {
    /// Binds `config.server` and starts serving.
    pub async fn bind(config: &Config, clock: Arc<dyn Clock>, tick: TickMode) -> Result<Self, ServerError> {
        let app = if config.server.external_app {
            None
        } else {
            let (app, files) = config.build_app()?;
            Some((AppDriver::new(app), files))
        };
        let addr = config.server.addr();
        let listener =
            TcpListener::bind(&addr).await.map_err(|source| ServerError::Bind { addr: addr.clone(), source })?;
        let local = listener.local_addr().map_err(|source| ServerError::Bind { addr, source })?;

        let (tx, rx) = mpsc::channel(HUB_QUEUE);
        let (shutdown, shutdown_rx) = watch::channel(false);
        // The actor is detached: it stops by itself once every handle and
        // connection task has gone.
        tokio::spawn(hub::Hub::new(clock, app).run(rx));
        let mut tasks = vec![tokio::spawn(net::accept_loop(listener, tx.clone(), shutdown_rx.clone()))];
        if tick == TickMode::Interval {
            let period = u64::try_from(config.camera_buffer.period_ms).unwrap_or(100).max(1);
            tasks.push(tokio::spawn(tick_loop(tx.clone(), Duration::from_millis(period), shutdown_rx)));
        }
        log::info!("relay listening on ws://{local}");
        Ok(Self { addr: local, handle: RelayHandle { tx }, shutdown, tasks })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}", self.addr)
    }

    pub fn handle(&self) -> RelayHandle {
        self.handle.clone()
    }

    /// Stops accepting, tells every connection to close and waits for the
    /// accept and tick tasks.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        drop(self.handle);
        for t in self.tasks {
            let _ = t.await;
        }
    }
}

async fn tick_loop(hub: mpsc::Sender<hub::Command>, period: Duration, mut shutdown: watch::Receiver<bool>) {
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = interval.tick() => {
                if hub.send(hub::Command::Tick { done: None }).await.is_err() {
                    break;
                }
            }
            _ = shutdown.changed() => break,
        }
    }
}
