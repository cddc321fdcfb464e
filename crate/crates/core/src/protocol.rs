//! Wire messages exchanged among viewer clients, the relay and the streamer app.
//!
//! Every message travels as one compact JSON object per websocket text frame.
//! The `type` field selects the body shape:
//!
//! | type          | fields                                                              |
//! |---------------|---------------------------------------------------------------------|
//! | `mouse_event` | seq, user, kind, points `[[x,y],..]`, offsets_ms, latency_ms, client_ts_ms |
//! | `context`     | seq, user, data `{string:string}`                                   |
//! | `app_update`  | seq, audience (`"all"` or `{"user":name}`), payload `{string:string}` |
//! | `hello`       | seq, role (`"viewer"`/`"app"`), optional user                        |
//! | `error`       | seq, code, detail                                                   |
//!
//! Decoding is strict: unknown types, unknown fields and wrong JSON types are
//! [`ProtocolError::Malformed`]; well-typed values that break a bound are
//! [`ProtocolError::InvariantViolation`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_USERNAME_CHARS: usize = 64;
pub const MAX_MAP_ENTRIES: usize = 16;
pub const MAX_KEY_CHARS: usize = 32;
pub const MAX_VALUE_CHARS: usize = 256;

/// Default drag distance (normalized units) separating a click from a gesture.
pub const MOTION_THRESHOLD: f64 = 0.01;
/// Default press duration at which a stationary press becomes a gesture.
pub const HOLD_TIMEOUT_MS: u64 = 250;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

fn violation(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::InvariantViolation(msg.into())
}

/// Flat string map carried by context payloads and app updates.
pub type KvMap = BTreeMap<String, String>;

/// A position as a fraction of the video frame; y grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "[f64; 2]")]
pub struct NormPoint {
    x: f64,
    y: f64,
}

impl NormPoint {
    pub fn new(x: f64, y: f64) -> Result<Self, ProtocolError> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(violation(format!("point ({x}, {y}) outside the unit frame")));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn distance(&self, other: &NormPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<NormPoint> for [f64; 2] {
    fn from(p: NormPoint) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Click,
    Gesture,
}

/// A click or a drag stroke on the video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewerEvent {
    pub user: String,
    pub kind: EventKind,
    pub points: Vec<NormPoint>,
    /// Milliseconds since stroke start for each point; `[0]` for a click.
    pub offsets_ms: Vec<u64>,
    pub latency_ms: u64,
    pub client_ts_ms: i64,
}

impl ViewerEvent {
    pub fn click(user: impl Into<String>, point: NormPoint, latency_ms: u64, client_ts_ms: i64) -> Self {
        Self {
            user: user.into(),
            kind: EventKind::Click,
            points: vec![point],
            offsets_ms: vec![0],
            latency_ms,
            client_ts_ms,
        }
    }

    pub fn gesture(
        user: impl Into<String>,
        points: Vec<NormPoint>,
        offsets_ms: Vec<u64>,
        latency_ms: u64,
        client_ts_ms: i64,
    ) -> Self {
        Self { user: user.into(), kind: EventKind::Gesture, points, offsets_ms, latency_ms, client_ts_ms }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        validate_username(&self.user)?;
        match self.kind {
            EventKind::Click if self.points.len() != 1 => return Err(violation("click must carry exactly one point")),
            EventKind::Gesture if self.points.len() < 2 => {
                return Err(violation("gesture must carry at least two points"))
            }
            _ => {}
        }
        if self.offsets_ms.len() != self.points.len() {
            return Err(violation("offsets_ms length differs from points length"));
        }
        if self.offsets_ms[0] != 0 {
            return Err(violation("first offset must be 0"));
        }
        if self.offsets_ms.windows(2).any(|w| w[1] < w[0]) {
            return Err(violation("offsets_ms must be non-decreasing"));
        }
        // NormPoint fields are private, but re-check in case of future constructors.
        for p in &self.points {
            NormPoint::new(p.x, p.y)?;
        }
        Ok(())
    }
}

/// Per-user augmentation set from the viewer panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextPayload {
    pub user: String,
    pub data: KvMap,
}

impl ContextPayload {
    pub fn new(user: impl Into<String>, data: KvMap) -> Self {
        Self { user: user.into(), data }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        validate_username(&self.user)?;
        validate_map(&self.data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Audience {
    All,
    SingleUser(String),
}

/// Back-channel payload from the app to viewer clients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppUpdate {
    pub payload: KvMap,
    pub audience: Audience,
}

impl AppUpdate {
    pub fn to_all(payload: KvMap) -> Self {
        Self { payload, audience: Audience::All }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if let Audience::SingleUser(u) = &self.audience {
            validate_username(u)?;
        }
        validate_map(&self.payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerRole {
    Viewer,
    App,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub role: PeerRole,
    pub user: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorBody {
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    MouseEvent(ViewerEvent),
    Context(ContextPayload),
    AppUpdate(AppUpdate),
    Hello(Hello),
    Error(ErrorBody),
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::MouseEvent(_) => "mouse_event",
            Message::Context(_) => "context",
            Message::AppUpdate(_) => "app_update",
            Message::Hello(_) => "hello",
            Message::Error(_) => "error",
        }
    }

    pub fn error(code: impl Into<String>, detail: impl Into<String>) -> Self {
        Message::Error(ErrorBody { code: code.into(), detail: detail.into() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub message: Message,
}

impl Envelope {
    pub fn new(seq: u64, message: Message) -> Self {
        Self { seq, message }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        match &self.message {
            Message::MouseEvent(e) => e.validate(),
            Message::Context(c) => c.validate(),
            Message::AppUpdate(u) => u.validate(),
            Message::Hello(h) => h.user.as_deref().map_or(Ok(()), validate_username),
            Message::Error(_) => Ok(()),
        }
    }
}

pub fn validate_username(user: &str) -> Result<(), ProtocolError> {
    if user.is_empty() {
        return Err(violation("username is empty"));
    }
    if user.chars().count() > MAX_USERNAME_CHARS {
        return Err(violation(format!("username longer than {MAX_USERNAME_CHARS} chars")));
    }
    Ok(())
}

pub fn validate_map(map: &KvMap) -> Result<(), ProtocolError> {
    if map.len() > MAX_MAP_ENTRIES {
        return Err(violation(format!("map has {} entries, limit {MAX_MAP_ENTRIES}", map.len())));
    }
    for (k, v) in map {
        if k.chars().count() > MAX_KEY_CHARS {
            return Err(violation(format!("key longer than {MAX_KEY_CHARS} chars")));
        }
        if v.chars().count() > MAX_VALUE_CHARS {
            return Err(violation(format!("value for {k:?} longer than {MAX_VALUE_CHARS} chars")));
        }
    }
    Ok(())
}

// Raw wire shapes. Integers are read signed so that negative values surface
// as invariant violations rather than type errors.

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum Wire {
    MouseEvent {
        seq: i64,
        user: String,
        kind: EventKind,
        points: Vec<[f64; 2]>,
        offsets_ms: Vec<i64>,
        latency_ms: i64,
        client_ts_ms: i64,
    },
    Context {
        seq: i64,
        user: String,
        data: KvMap,
    },
    AppUpdate {
        seq: i64,
        audience: WireAudience,
        payload: KvMap,
    },
    Hello {
        seq: i64,
        role: PeerRole,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        user: Option<String>,
    },
    Error {
        seq: i64,
        code: String,
        detail: String,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WireAudience {
    Keyword(String),
    User(WireUser),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireUser {
    user: String,
}

fn to_u64(v: i64, field: &str) -> Result<u64, ProtocolError> {
    u64::try_from(v).map_err(|_| violation(format!("{field} must be non-negative, got {v}")))
}

fn to_i64(v: u64, field: &str) -> Result<i64, ProtocolError> {
    i64::try_from(v).map_err(|_| violation(format!("{field} exceeds the JSON integer range")))
}

impl Wire {
    fn from_envelope(env: &Envelope) -> Result<Self, ProtocolError> {
        let seq = to_i64(env.seq, "seq")?;
        Ok(match &env.message {
            Message::MouseEvent(e) => Wire::MouseEvent {
                seq,
                user: e.user.clone(),
                kind: e.kind,
                points: e.points.iter().map(|&p| p.into()).collect(),
                offsets_ms: e.offsets_ms.iter().map(|&o| to_i64(o, "offsets_ms")).collect::<Result<_, _>>()?,
                latency_ms: to_i64(e.latency_ms, "latency_ms")?,
                client_ts_ms: e.client_ts_ms,
            },
            Message::Context(c) => Wire::Context { seq, user: c.user.clone(), data: c.data.clone() },
            Message::AppUpdate(u) => Wire::AppUpdate {
                seq,
                audience: match &u.audience {
                    Audience::All => WireAudience::Keyword("all".into()),
                    Audience::SingleUser(name) => WireAudience::User(WireUser { user: name.clone() }),
                },
                payload: u.payload.clone(),
            },
            Message::Hello(h) => Wire::Hello { seq, role: h.role, user: h.user.clone() },
            Message::Error(e) => Wire::Error { seq, code: e.code.clone(), detail: e.detail.clone() },
        })
    }

    fn into_envelope(self) -> Result<Envelope, ProtocolError> {
        let (seq, message) = match self {
            Wire::MouseEvent { seq, user, kind, points, offsets_ms, latency_ms, client_ts_ms } => {
                let points = points.into_iter().map(|[x, y]| NormPoint::new(x, y)).collect::<Result<Vec<_>, _>>()?;
                let offsets_ms =
                    offsets_ms.into_iter().map(|o| to_u64(o, "offsets_ms")).collect::<Result<Vec<_>, _>>()?;
                let event = ViewerEvent {
                    user,
                    kind,
                    points,
                    offsets_ms,
                    latency_ms: to_u64(latency_ms, "latency_ms")?,
                    client_ts_ms,
                };
                (seq, Message::MouseEvent(event))
            }
            Wire::Context { seq, user, data } => (seq, Message::Context(ContextPayload { user, data })),
            Wire::AppUpdate { seq, audience, payload } => {
                let audience = match audience {
                    WireAudience::Keyword(k) if k == "all" => Audience::All,
                    WireAudience::Keyword(k) => {
                        return Err(ProtocolError::Malformed(format!("unknown audience {k:?}")))
                    }
                    WireAudience::User(u) => Audience::SingleUser(u.user),
                };
                (seq, Message::AppUpdate(AppUpdate { payload, audience }))
            }
            Wire::Hello { seq, role, user } => (seq, Message::Hello(Hello { role, user })),
            Wire::Error { seq, code, detail } => (seq, Message::Error(ErrorBody { code, detail })),
        };
        let env = Envelope { seq: to_u64(seq, "seq")?, message };
        env.validate()?;
        Ok(env)
    }
}

/// Serializes an envelope as a single-line JSON object.
pub fn encode(envelope: &Envelope) -> Result<Vec<u8>, ProtocolError> {
    envelope.validate()?;
    let wire = Wire::from_envelope(envelope)?;
    serde_json::to_vec(&wire).map_err(|e| violation(e.to_string()))
}

pub fn encode_string(envelope: &Envelope) -> Result<String, ProtocolError> {
    // serde_json only ever produces UTF-8
    encode(envelope).map(|b| String::from_utf8(b).expect("serde_json emits UTF-8"))
}

pub fn decode(bytes: &[u8]) -> Result<Envelope, ProtocolError> {
    let wire: Wire = serde_json::from_slice(bytes).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    wire.into_envelope()
}

/// Wire form used inside replay logs, where the envelope is nested in a larger object.
pub fn envelope_to_value(envelope: &Envelope) -> Result<serde_json::Value, ProtocolError> {
    envelope.validate()?;
    serde_json::to_value(Wire::from_envelope(envelope)?).map_err(|e| violation(e.to_string()))
}

pub fn envelope_from_value(value: serde_json::Value) -> Result<Envelope, ProtocolError> {
    let wire: Wire = serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    wire.into_envelope()
}

/// Click/gesture discrimination thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputThresholds {
    pub motion_threshold: f64,
    pub hold_timeout_ms: u64,
}

impl Default for InputThresholds {
    fn default() -> Self {
        Self { motion_threshold: MOTION_THRESHOLD, hold_timeout_ms: HOLD_TIMEOUT_MS }
    }
}

/// Decides whether a press/release pair is a click or a gesture.
///
/// A press becomes a gesture once the pointer strays at least `motion_threshold`
/// from the press point at any time, or once it is held for `hold_timeout_ms`.
pub fn classify_raw_input(
    press: NormPoint,
    release: NormPoint,
    trajectory: &[NormPoint],
    hold_ms: u64,
    thresholds: &InputThresholds,
) -> EventKind {
    let max_disp =
        trajectory.iter().chain(std::iter::once(&release)).map(|p| press.distance(p)).fold(0.0_f64, f64::max);
    if max_disp >= thresholds.motion_threshold || hold_ms >= thresholds.hold_timeout_ms {
        EventKind::Gesture
    } else {
        EventKind::Click
    }
}
