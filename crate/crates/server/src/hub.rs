//! The relay actor: a single task that owns the session, the in-process app
//! and every connection's outbound queue.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use spatial_relay_core::apps::AppDriver;
use spatial_relay_core::policy::PolicyFiles;
use spatial_relay_core::protocol::{self, Hello, PeerRole};
use spatial_relay_core::relay::{AppDelivery, ConnId, Outbound, RelayStats, Session};
use tokio::sync::{mpsc, oneshot};

use crate::clock::Clock;
use crate::ServerError;

/// Connection id of the app when it runs inside the relay process.
pub const IN_PROCESS_APP: ConnId = 0;

/// Outbound frames queued per connection before it counts as a slow consumer.
pub const OUTBOUND_QUEUE: usize = 1024;

/// Role and ban files are re-checked at most this often.
const POLICY_RELOAD_MS: i64 = 1_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeerFrame {
    Text(String),
    Close,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServerStats {
    pub relay: RelayStats,
    pub frames_in: u64,
    pub open_connections: usize,
    pub viewers: usize,
    pub app_connected: bool,
    /// Events the in-process app accepted.
    pub app_admitted: u64,
    /// Events the in-process app rejected, in total and by reason.
    pub app_rejected: u64,
    pub rejections: BTreeMap<String, u64>,
    /// Connections closed because their outbound queue overflowed.
    pub slow_consumers: u64,
}

pub(crate) enum Command {
    Connect { conn: ConnId, tx: mpsc::Sender<PeerFrame> },
    Frame { conn: ConnId, bytes: Vec<u8> },
    Disconnect { conn: ConnId },
    Tick { done: Option<oneshot::Sender<()>> },
    Stats(oneshot::Sender<ServerStats>),
    Snapshot(oneshot::Sender<Option<serde_json::Value>>),
    ExportReplay(oneshot::Sender<Vec<u8>>),
    OutcomeLog(oneshot::Sender<Option<Vec<u8>>>),
}

pub(crate) struct Hub {
    clock: Arc<dyn Clock>,
    session: Session,
    driver: Option<AppDriver>,
    policy: Option<PolicyFiles>,
    last_reload_ms: i64,
    peers: HashMap<ConnId, mpsc::Sender<PeerFrame>>,
    stats: ServerStats,
}

impl Hub {
    pub(crate) fn new(clock: Arc<dyn Clock>, app: Option<(AppDriver, PolicyFiles)>) -> Self {
        let mut session = Session::new();
        let (driver, policy) = match app {
            Some((driver, files)) => {
                session
                    .register(IN_PROCESS_APP, &Hello { role: PeerRole::App, user: None })
                    .expect("fresh session accepts an app");
                (Some(driver), Some(files))
            }
            None => (None, None),
        };
        Self {
            last_reload_ms: clock.now_ms(),
            clock,
            session,
            driver,
            policy,
            peers: HashMap::new(),
            stats: ServerStats::default(),
        }
    }

    pub(crate) async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        while let Some(cmd) = rx.recv().await {
            self.apply(cmd);
        }
        log::debug!("relay hub stopped");
    }

    fn apply(&mut self, cmd: Command) {
        match cmd {
            Command::Connect { conn, tx } => {
                self.peers.insert(conn, tx);
            }
            Command::Frame { conn, bytes } => {
                if !self.peers.contains_key(&conn) {
                    // Closed by the relay; frames still in flight are discarded.
                    return;
                }
                self.stats.frames_in += 1;
                let now = self.clock.now_ms();
                let out = self.session.handle_frame(conn, &bytes, now);
                self.dispatch(out);
            }
            Command::Disconnect { conn } => {
                self.peers.remove(&conn);
                self.session.disconnect(conn);
            }
            Command::Tick { done } => {
                self.tick();
                if let Some(done) = done {
                    let _ = done.send(());
                }
            }
            Command::Stats(reply) => {
                let _ = reply.send(self.stats());
            }
            Command::Snapshot(reply) => {
                let _ = reply.send(self.driver.as_ref().map(AppDriver::snapshot));
            }
            Command::ExportReplay(reply) => {
                let _ = reply.send(self.session.export_replay());
            }
            Command::OutcomeLog(reply) => {
                let _ = reply.send(self.driver.as_ref().map(AppDriver::outcome_log));
            }
        }
    }

    fn stats(&self) -> ServerStats {
        ServerStats {
            relay: self.session.stats(),
            open_connections: self.peers.len(),
            viewers: self.session.viewer_count(),
            app_connected: self.session.app_connected(),
            ..self.stats.clone()
        }
    }

    fn tick(&mut self) {
        let now = self.clock.now_ms();
        self.reload_policy(now);
        if let Some(driver) = self.driver.as_mut() {
            driver.advance_to(now);
        }
        self.flush_app_updates();
    }

    fn reload_policy(&mut self, now: i64) {
        let (Some(files), Some(driver)) = (self.policy.as_mut(), self.driver.as_mut()) else { return };
        if now - self.last_reload_ms < POLICY_RELOAD_MS {
            return;
        }
        self.last_reload_ms = now;
        let gk = driver.app_mut().gatekeeper_mut();
        match files.reload_if_changed(&mut gk.roles, &mut gk.gate) {
            Ok(true) => log::info!("reloaded role and ban lists"),
            Ok(false) => {}
            // Keep the previous lists; a half-written file is retried next time.
            Err(e) => log::warn!("policy reload failed: {e}"),
        }
    }

    fn dispatch(&mut self, out: Vec<Outbound>) {
        for o in out {
            match o {
                Outbound::ToApp { conn: IN_PROCESS_APP, delivery, .. } => self.deliver_in_process(&delivery),
                Outbound::ToApp { conn, envelope, .. } | Outbound::ToPeer { conn, envelope } => {
                    match protocol::encode_string(&envelope) {
                        Ok(text) => self.send(conn, PeerFrame::Text(text)),
                        Err(e) => log::error!("dropping unencodable envelope for {conn}: {e}"),
                    }
                }
                Outbound::Close(conn) => {
                    self.send(conn, PeerFrame::Close);
                    self.peers.remove(&conn);
                }
            }
        }
    }

    fn deliver_in_process(&mut self, delivery: &AppDelivery) {
        let Some(driver) = self.driver.as_mut() else { return };
        match driver.deliver(delivery) {
            Some(Ok(_)) => self.stats.app_admitted += 1,
            Some(Err(reject)) => {
                self.stats.app_rejected += 1;
                *self.stats.rejections.entry(reject.reason().to_string()).or_default() += 1;
            }
            None => {}
        }
        self.flush_app_updates();
    }

    fn flush_app_updates(&mut self) {
        let Some(driver) = self.driver.as_mut() else { return };
        let updates = driver.drain_updates();
        let mut out = Vec::new();
        for update in &updates {
            if let Err(e) = self.session.push_app_update(IN_PROCESS_APP, update, &mut out) {
                log::warn!("app produced an invalid update: {e}");
            }
        }
        self.dispatch(out);
    }

    fn send(&mut self, conn: ConnId, frame: PeerFrame) {
        let Some(tx) = self.peers.get(&conn) else { return };
        match tx.try_send(frame) {
            Ok(()) => {}
            Err(mpsc::error::TrySendError::Full(_)) => {
                log::warn!("connection {conn} is not keeping up, closing it");
                self.stats.slow_consumers += 1;
                self.peers.remove(&conn);
                self.session.disconnect(conn);
            }
            Err(mpsc::error::TrySendError::Closed(_)) => {
                self.peers.remove(&conn);
                self.session.disconnect(conn);
            }
        }
    }
}

/// Cloneable handle for talking to a running relay.
#[derive(Debug, Clone)]
pub struct RelayHandle {
    pub(crate) tx: mpsc::Sender<Command>,
}

impl RelayHandle {
    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ServerError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).await.map_err(|_| ServerError::Stopped)?;
        rx.await.map_err(|_| ServerError::Stopped)
    }

    /// Advances the in-process app to the clock's current time and waits
    /// until any resulting updates have been queued.
    pub async fn tick(&self) -> Result<(), ServerError> {
        self.ask(|done| Command::Tick { done: Some(done) }).await
    }

    pub async fn stats(&self) -> Result<ServerStats, ServerError> {
        self.ask(Command::Stats).await
    }

    /// State of the in-process app, if there is one.
    pub async fn snapshot(&self) -> Result<Option<serde_json::Value>, ServerError> {
        self.ask(Command::Snapshot).await
    }

    /// The receive log as JSONL.
    pub async fn export_replay(&self) -> Result<Vec<u8>, ServerError> {
        self.ask(Command::ExportReplay).await
    }

    pub async fn outcome_log(&self) -> Result<Option<Vec<u8>>, ServerError> {
        self.ask(Command::OutcomeLog).await
    }
}

#[cfg(test)]
mod tests {
    use spatial_relay_core::apps::{build_app, AppSection};
    use spatial_relay_core::protocol::{ContextPayload, Envelope, KvMap, Message, NormPoint, ViewerEvent};
    use spatial_relay_core::BufferParams;

    use super::*;
    use crate::clock::ManualClock;

    fn hub(clock: &ManualClock) -> Hub {
        let app = build_app(&AppSection::default(), BufferParams::default(), Default::default()).unwrap();
        Hub::new(Arc::new(clock.clone()), Some((AppDriver::new(app), PolicyFiles::new(None, None))))
    }

    fn frame(conn: ConnId, seq: u64, message: Message) -> Command {
        Command::Frame { conn, bytes: protocol::encode(&Envelope::new(seq, message)).unwrap() }
    }

    fn drain(rx: &mut mpsc::Receiver<PeerFrame>) -> Vec<PeerFrame> {
        std::iter::from_fn(|| rx.try_recv().ok()).collect()
    }

    #[test]
    fn click_reaches_in_process_app() {
        let clock = ManualClock::new(0);
        let mut hub = hub(&clock);
        let (tx, mut rx) = mpsc::channel(16);
        hub.apply(Command::Connect { conn: 1, tx });
        hub.apply(frame(1, 1, Message::Hello(Hello { role: PeerRole::Viewer, user: Some("ann".into()) })));
        let item = KvMap::from([("item".to_string(), "torch".to_string())]);
        hub.apply(frame(1, 2, Message::Context(ContextPayload::new("ann", item))));
        clock.set(1_000);
        hub.apply(frame(1, 3, Message::MouseEvent(ViewerEvent::click("ann", NormPoint::new(0.9, 0.5).unwrap(), 0, 0))));
        let stats = hub.stats();
        assert_eq!(stats.relay.events_delivered, 1);
        assert_eq!(stats.app_admitted + stats.app_rejected, 1);
        // Only the hello acknowledgement goes back to the viewer.
        let frames = drain(&mut rx);
        assert_eq!(frames.len(), 1);
        let PeerFrame::Text(ack) = &frames[0] else { panic!("expected text") };
        assert!(matches!(protocol::decode(ack.as_bytes()).unwrap().message, Message::Hello(_)));
    }

    #[test]
    fn garbage_counts_as_protocol_error() {
        let clock = ManualClock::new(0);
        let mut hub = hub(&clock);
        let (tx, mut rx) = mpsc::channel(16);
        hub.apply(Command::Connect { conn: 1, tx });
        hub.apply(Command::Frame { conn: 1, bytes: b"{nope".to_vec() });
        assert_eq!(hub.stats().relay.protocol_errors, 1);
        let PeerFrame::Text(err) = &drain(&mut rx)[0] else { panic!("expected text") };
        assert!(matches!(protocol::decode(err.as_bytes()).unwrap().message, Message::Error(_)));
    }

    #[test]
    fn slow_consumer_is_dropped() {
        let clock = ManualClock::new(0);
        let mut hub = hub(&clock);
        let (tx, _rx) = mpsc::channel(1);
        hub.apply(Command::Connect { conn: 1, tx });
        hub.apply(frame(1, 1, Message::Hello(Hello { role: PeerRole::Viewer, user: Some("ann".into()) })));
        // The ack filled the queue; the error reply for this frame overflows it.
        hub.apply(Command::Frame { conn: 1, bytes: b"[]".to_vec() });
        let stats = hub.stats();
        assert_eq!(stats.slow_consumers, 1);
        assert_eq!(stats.open_connections, 0);
        assert_eq!(stats.viewers, 0);
    }

    #[test]
    fn frames_after_relay_close_are_ignored() {
        let clock = ManualClock::new(0);
        let mut hub = hub(&clock);
        let (tx1, mut rx1) = mpsc::channel(16);
        let (tx2, _rx2) = mpsc::channel(16);
        hub.apply(Command::Connect { conn: 1, tx: tx1 });
        hub.apply(Command::Connect { conn: 2, tx: tx2 });
        let hello = || Message::Hello(Hello { role: PeerRole::Viewer, user: Some("ann".into()) });
        hub.apply(frame(1, 1, hello()));
        hub.apply(frame(2, 1, hello()));
        assert_eq!(drain(&mut rx1).last(), Some(&PeerFrame::Close));
        hub.apply(Command::Frame { conn: 1, bytes: b"{nope".to_vec() });
        assert_eq!(hub.stats().frames_in, 2);
        assert_eq!(hub.stats().relay.protocol_errors, 0);
    }
}
