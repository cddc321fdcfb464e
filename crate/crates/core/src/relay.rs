//! Session hub: connection registry, context store, event admission and fan-out.
//!
//! [`Session`] is a synchronous state machine. A transport feeds it inbound
//! frames together with a server timestamp and carries out the returned
//! [`Outbound`] actions. All mutation goes through `&mut self`, so whichever
//! task owns the session serializes every state change and the receive log
//! gets a total order.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::protocol::{
    self, AppUpdate, Audience, ContextPayload, Envelope, Hello, KvMap, Message, PeerRole, ProtocolError, ViewerEvent,
};

pub type ConnId = u64;

/// A viewer event accepted by the relay, paired with the sender's context.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittedEvent {
    pub event: ViewerEvent,
    pub context_snapshot: KvMap,
    /// Relay receive time on the server clock.
    pub server_ts_ms: i64,
}

impl AdmittedEvent {
    /// The moment in app history the viewer was reacting to.
    pub fn intent_ts_ms(&self) -> i64 {
        let latency = i64::try_from(self.event.latency_ms).unwrap_or(i64::MAX);
        self.server_ts_ms.saturating_sub(latency)
    }

    pub fn user(&self) -> &str {
        &self.event.user
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelayError {
    #[error("an application is already connected")]
    DuplicateApp,
    #[error("viewer hello must carry a username")]
    MissingUsername,
    #[error("sender {sender:?} may not act for {claimed:?}")]
    UserMismatch { sender: String, claimed: String },
    #[error("no application connected")]
    NoApp,
    #[error("only the application connection may push updates")]
    NotApp,
    #[error("connection has not sent hello")]
    NotRegistered,
    #[error("connection already registered")]
    AlreadyRegistered,
    #[error("sequence number {got} does not follow {last}")]
    OutOfOrderSeq { last: u64, got: u64 },
    #[error("{role:?} connection may not send {msg_type}")]
    Unexpected { role: PeerRole, msg_type: &'static str },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl RelayError {
    /// Value of the `code` field in the error frame sent back to the peer.
    pub fn code(&self) -> &'static str {
        match self {
            RelayError::DuplicateApp => "duplicate_app",
            RelayError::MissingUsername => "missing_username",
            RelayError::UserMismatch { .. } => "user_mismatch",
            RelayError::NoApp => "no_app",
            RelayError::NotApp => "not_app",
            RelayError::NotRegistered => "not_registered",
            RelayError::AlreadyRegistered => "already_registered",
            RelayError::OutOfOrderSeq { .. } => "bad_seq",
            RelayError::Unexpected { .. } => "unexpected_message",
            RelayError::Protocol(ProtocolError::Malformed(_)) => "malformed",
            RelayError::Protocol(ProtocolError::InvariantViolation(_)) => "invariant_violation",
        }
    }
}

/// What the relay hands to the application.
#[derive(Debug, Clone, PartialEq)]
pub enum AppDelivery {
    Context { payload: ContextPayload, server_ts_ms: i64 },
    Event(AdmittedEvent),
}

impl AppDelivery {
    pub fn server_ts_ms(&self) -> i64 {
        match self {
            AppDelivery::Context { server_ts_ms, .. } => *server_ts_ms,
            AppDelivery::Event(e) => e.server_ts_ms,
        }
    }
}

/// Action the transport must carry out after feeding the session.
#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    /// Delivery to the app connection. `envelope` is the wire form (re-sequenced
    /// for the app connection) for out-of-process apps.
    ToApp {
        conn: ConnId,
        delivery: AppDelivery,
        envelope: Envelope,
    },
    ToPeer {
        conn: ConnId,
        envelope: Envelope,
    },
    Close(ConnId),
}

/// One line of the receive log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub ts: i64,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RelayStats {
    pub events_received: u64,
    pub events_delivered: u64,
    pub events_dropped: u64,
    pub contexts_stored: u64,
    pub protocol_errors: u64,
    pub updates_delivered: u64,
}

#[derive(Debug, Clone)]
struct Peer {
    role: PeerRole,
    user: Option<String>,
    last_in_seq: u64,
    next_out_seq: u64,
}

#[derive(Debug, Default)]
pub struct Session {
    peers: BTreeMap<ConnId, Peer>,
    viewers_by_user: BTreeMap<String, ConnId>,
    app: Option<ConnId>,
    context_store: BTreeMap<String, KvMap>,
    receive_log: Vec<LogEntry>,
    last_ts: i64,
    stats: RelayStats,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn app_connected(&self) -> bool {
        self.app.is_some()
    }

    pub fn app_conn(&self) -> Option<ConnId> {
        self.app
    }

    pub fn viewer_count(&self) -> usize {
        self.viewers_by_user.len()
    }

    pub fn viewer_conn(&self, user: &str) -> Option<ConnId> {
        self.viewers_by_user.get(user).copied()
    }

    pub fn context_of(&self, user: &str) -> Option<&KvMap> {
        self.context_store.get(user)
    }

    pub fn receive_log(&self) -> &[LogEntry] {
        &self.receive_log
    }

    pub fn stats(&self) -> RelayStats {
        self.stats
    }

    pub fn is_registered(&self, conn: ConnId) -> bool {
        self.peers.contains_key(&conn)
    }

    /// Joins a connection to the session. Returns the connection displaced by
    /// a viewer re-using a username, which the transport should close.
    pub fn register(&mut self, conn: ConnId, hello: &Hello) -> Result<Option<ConnId>, RelayError> {
        self.register_with_seq(conn, hello, 0)
    }

    fn register_with_seq(&mut self, conn: ConnId, hello: &Hello, seq: u64) -> Result<Option<ConnId>, RelayError> {
        if self.peers.contains_key(&conn) {
            return Err(RelayError::AlreadyRegistered);
        }
        let mut replaced = None;
        match hello.role {
            PeerRole::App => {
                if self.app.is_some() {
                    return Err(RelayError::DuplicateApp);
                }
                self.app = Some(conn);
            }
            PeerRole::Viewer => {
                let user = hello.user.as_deref().ok_or(RelayError::MissingUsername)?;
                protocol::validate_username(user)?;
                if let Some(old) = self.viewers_by_user.insert(user.to_string(), conn) {
                    self.peers.remove(&old);
                    replaced = Some(old);
                }
            }
        }
        self.peers.insert(conn, Peer { role: hello.role, user: hello.user.clone(), last_in_seq: seq, next_out_seq: 1 });
        Ok(replaced)
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        let Some(peer) = self.peers.remove(&conn) else { return };
        match peer.role {
            PeerRole::App => self.app = None,
            PeerRole::Viewer => {
                if let Some(user) = peer.user {
                    if self.viewers_by_user.get(&user) == Some(&conn) {
                        self.viewers_by_user.remove(&user);
                    }
                }
            }
        }
    }

    fn sender_user(&self, conn: ConnId) -> Result<&str, RelayError> {
        let peer = self.peers.get(&conn).ok_or(RelayError::NotRegistered)?;
        match (peer.role, peer.user.as_deref()) {
            (PeerRole::Viewer, Some(u)) => Ok(u),
            (role, _) => Err(RelayError::Unexpected { role, msg_type: "viewer message" }),
        }
    }

    fn stamp(&mut self, now_ms: i64) -> i64 {
        self.last_ts = self.last_ts.max(now_ms);
        self.last_ts
    }

    fn out_seq(&mut self, conn: ConnId) -> u64 {
        let peer = self.peers.get_mut(&conn).expect("outbound to registered peer");
        let seq = peer.next_out_seq;
        peer.next_out_seq += 1;
        seq
    }

    fn send_to_app(&mut self, delivery: AppDelivery, message: Message, out: &mut Vec<Outbound>) {
        let conn = self.app.expect("app presence checked by caller");
        let envelope = Envelope::new(self.out_seq(conn), message);
        out.push(Outbound::ToApp { conn, delivery, envelope });
    }

    /// Replaces the sender's stored context and forwards it to the app.
    pub fn ingest_context(
        &mut self,
        conn: ConnId,
        seq: u64,
        payload: ContextPayload,
        now_ms: i64,
        out: &mut Vec<Outbound>,
    ) -> Result<(), RelayError> {
        let sender = self.sender_user(conn)?;
        if sender != payload.user {
            return Err(RelayError::UserMismatch { sender: sender.to_string(), claimed: payload.user });
        }
        payload.validate()?;
        let ts = self.stamp(now_ms);
        self.apply_context(Envelope::new(seq, Message::Context(payload)), ts, out);
        Ok(())
    }

    fn apply_context(&mut self, envelope: Envelope, ts: i64, out: &mut Vec<Outbound>) {
        let Message::Context(payload) = &envelope.message else { unreachable!("context envelope") };
        let payload = payload.clone();
        self.context_store.insert(payload.user.clone(), payload.data.clone());
        self.stats.contexts_stored += 1;
        self.receive_log.push(LogEntry { ts, envelope });
        if self.app.is_some() {
            let message = Message::Context(payload.clone());
            self.send_to_app(AppDelivery::Context { payload, server_ts_ms: ts }, message, out);
        }
    }

    /// Stamps, pairs with context, logs and forwards a viewer event.
    pub fn ingest_event(
        &mut self,
        conn: ConnId,
        seq: u64,
        event: ViewerEvent,
        now_ms: i64,
        out: &mut Vec<Outbound>,
    ) -> Result<AdmittedEvent, RelayError> {
        self.stats.events_received += 1;
        let checked = self.check_event(conn, &event);
        if let Err(e) = checked {
            self.stats.events_dropped += 1;
            return Err(e);
        }
        let ts = self.stamp(now_ms);
        Ok(self.apply_event(Envelope::new(seq, Message::MouseEvent(event)), ts, out))
    }

    fn check_event(&self, conn: ConnId, event: &ViewerEvent) -> Result<(), RelayError> {
        let sender = self.sender_user(conn)?;
        if sender != event.user {
            return Err(RelayError::UserMismatch { sender: sender.to_string(), claimed: event.user.clone() });
        }
        event.validate()?;
        if self.app.is_none() {
            return Err(RelayError::NoApp);
        }
        Ok(())
    }

    fn apply_event(&mut self, envelope: Envelope, ts: i64, out: &mut Vec<Outbound>) -> AdmittedEvent {
        let Message::MouseEvent(event) = &envelope.message else { unreachable!("event envelope") };
        let admitted = AdmittedEvent {
            event: event.clone(),
            context_snapshot: self.context_store.get(&event.user).cloned().unwrap_or_default(),
            server_ts_ms: ts,
        };
        let message = envelope.message.clone();
        self.receive_log.push(LogEntry { ts, envelope });
        self.stats.events_delivered += 1;
        self.send_to_app(AppDelivery::Event(admitted.clone()), message, out);
        admitted
    }

    /// Fans an app update out to viewers. Returns the receiving connections.
    pub fn push_app_update(
        &mut self,
        conn: ConnId,
        update: &AppUpdate,
        out: &mut Vec<Outbound>,
    ) -> Result<Vec<ConnId>, RelayError> {
        if self.app != Some(conn) {
            return Err(RelayError::NotApp);
        }
        update.validate()?;
        let targets: Vec<ConnId> = match &update.audience {
            Audience::All => self.viewers_by_user.values().copied().collect(),
            Audience::SingleUser(u) => self.viewers_by_user.get(u).copied().into_iter().collect(),
        };
        for &target in &targets {
            let envelope = Envelope::new(self.out_seq(target), Message::AppUpdate(update.clone()));
            out.push(Outbound::ToPeer { conn: target, envelope });
        }
        self.stats.updates_delivered += targets.len() as u64;
        Ok(targets)
    }

    /// Entry point for a decoded frame from `conn`.
    pub fn handle(&mut self, conn: ConnId, envelope: Envelope, now_ms: i64) -> Vec<Outbound> {
        let mut out = Vec::new();
        if let Err(err) = self.dispatch(conn, envelope, now_ms, &mut out) {
            self.reject(conn, &err, &mut out);
        }
        out
    }

    /// Entry point for a raw text frame; undecodable frames produce an error reply.
    pub fn handle_frame(&mut self, conn: ConnId, frame: &[u8], now_ms: i64) -> Vec<Outbound> {
        match protocol::decode(frame) {
            Ok(env) => self.handle(conn, env, now_ms),
            Err(e) => {
                let mut out = Vec::new();
                self.reject(conn, &RelayError::Protocol(e), &mut out);
                out
            }
        }
    }

    fn reject(&mut self, conn: ConnId, err: &RelayError, out: &mut Vec<Outbound>) {
        if matches!(err, RelayError::Protocol(_)) {
            self.stats.protocol_errors += 1;
        }
        let seq = match self.peers.get_mut(&conn) {
            Some(peer) => {
                let s = peer.next_out_seq;
                peer.next_out_seq += 1;
                s
            }
            None => 0,
        };
        out.push(Outbound::ToPeer { conn, envelope: Envelope::new(seq, Message::error(err.code(), err.to_string())) });
    }

    fn dispatch(
        &mut self,
        conn: ConnId,
        envelope: Envelope,
        now_ms: i64,
        out: &mut Vec<Outbound>,
    ) -> Result<(), RelayError> {
        let Envelope { seq, message } = envelope;
        if let Message::Hello(hello) = &message {
            let replaced = self.register_with_seq(conn, hello, seq)?;
            if let Some(old) = replaced {
                out.push(Outbound::Close(old));
            }
            let ack = Envelope::new(self.out_seq(conn), message);
            out.push(Outbound::ToPeer { conn, envelope: ack });
            return Ok(());
        }
        let peer = self.peers.get_mut(&conn).ok_or(RelayError::NotRegistered)?;
        if seq <= peer.last_in_seq {
            if matches!(message, Message::MouseEvent(_)) {
                self.stats.events_received += 1;
                self.stats.events_dropped += 1;
            }
            return Err(RelayError::OutOfOrderSeq { last: peer.last_in_seq, got: seq });
        }
        peer.last_in_seq = seq;
        match message {
            Message::MouseEvent(event) => self.ingest_event(conn, seq, event, now_ms, out).map(|_| ()),
            Message::Context(payload) => self.ingest_context(conn, seq, payload, now_ms, out),
            Message::AppUpdate(update) => self.push_app_update(conn, &update, out).map(|_| ()),
            Message::Error(e) => {
                log::warn!("peer {conn} reported error {}: {}", e.code, e.detail);
                Ok(())
            }
            Message::Hello(_) => unreachable!("handled above"),
        }
    }

    /// Serializes the receive log as JSONL, one `{"ts":..,"envelope":..}` per line.
    pub fn export_replay(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        for entry in &self.receive_log {
            write_log_line(&mut buf, entry);
        }
        buf
    }

    /// Rebuilds a session from an exported log, returning the deliveries the
    /// app would have received, in order. The rebuilt session has a single
    /// app connection with id 0.
    pub fn from_replay(bytes: &[u8]) -> Result<(Session, Vec<AppDelivery>), ReplayError> {
        let entries = parse_replay(bytes)?;
        let mut session = Session::new();
        session
            .register(REPLAY_APP_CONN, &Hello { role: PeerRole::App, user: None })
            .expect("fresh session accepts an app");
        let mut out = Vec::new();
        for entry in entries {
            let ts = session.stamp(entry.ts);
            match entry.envelope.message {
                Message::Context(_) => session.apply_context(entry.envelope, ts, &mut out),
                Message::MouseEvent(_) => {
                    session.stats.events_received += 1;
                    session.apply_event(entry.envelope, ts, &mut out);
                }
                _ => unreachable!("parse_replay only yields contexts and events"),
            }
        }
        let deliveries = out
            .into_iter()
            .filter_map(|o| match o {
                Outbound::ToApp { delivery, .. } => Some(delivery),
                _ => None,
            })
            .collect();
        Ok((session, deliveries))
    }
}

pub const REPLAY_APP_CONN: ConnId = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("corrupt replay log at line {line}: {reason}")]
pub struct ReplayError {
    pub line: usize,
    pub reason: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    ts: i64,
    envelope: serde_json::Value,
}

pub fn write_log_line(buf: &mut Vec<u8>, entry: &LogEntry) {
    // Envelopes in the log were validated on the way in.
    let env = protocol::encode_string(&entry.envelope).expect("logged envelopes are valid");
    buf.extend_from_slice(format!("{{\"ts\":{},\"envelope\":{}}}\n", entry.ts, env).as_bytes());
}

/// Parses a JSONL receive log. Lines must be complete, newline-terminated,
/// hold only contexts and mouse events, and carry non-decreasing timestamps.
pub fn parse_replay(bytes: &[u8]) -> Result<Vec<LogEntry>, ReplayError> {
    let mut entries = Vec::new();
    if bytes.is_empty() {
        return Ok(entries);
    }
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        ReplayError { line, reason: "invalid UTF-8".into() }
    })?;
    let mut lines: Vec<&str> = text.split('\n').collect();
    // A well-formed log ends with '\n', leaving one empty tail element.
    let tail = lines.pop().unwrap_or_default();
    if !tail.is_empty() {
        return Err(ReplayError { line: lines.len() + 1, reason: "truncated final line".into() });
    }
    let mut last_ts = i64::MIN;
    for (idx, line) in lines.into_iter().enumerate() {
        let lineno = idx + 1;
        let corrupt = |reason: String| ReplayError { line: lineno, reason };
        let raw: RawLine = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        let envelope = protocol::envelope_from_value(raw.envelope).map_err(|e| corrupt(e.to_string()))?;
        if !matches!(envelope.message, Message::Context(_) | Message::MouseEvent(_)) {
            return Err(corrupt(format!("unexpected {} entry", envelope.message.type_name())));
        }
        if raw.ts < last_ts {
            return Err(corrupt(format!("timestamp {} precedes {}", raw.ts, last_ts)));
        }
        last_ts = raw.ts;
        entries.push(LogEntry { ts: raw.ts, envelope });
    }
    Ok(entries)
}
