//! Headless reference applications.
//!
//! Each app is a single-threaded state machine advanced by [`AppDriver`]:
//! ticks fire every camera-buffer period, and relay deliveries are applied
//! after all ticks up to their server timestamp. Given the same deliveries and
//! config, an app always reaches the same state.

mod arena;
mod canvas;
mod economy;
mod force;
mod poll;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compensation::{BufferParams, CameraBuffer, CameraState, CompensationError};
use crate::geom::{Vec2, WorldPoint};
use crate::gesture::Recognizer;
use crate::policy::{self, CooldownState, GateConfig, RejectReason, RoleTable, Verdict};
use crate::protocol::{AppUpdate, ContextPayload};
use crate::relay::{AdmittedEvent, AppDelivery};

pub use arena::{ArenaApp, ArenaConfig, ArenaState, Entity, ItemSpec, MessageMarker};
pub use canvas::{CanvasApp, CanvasConfig, CanvasState, StrokeRecord};
pub use economy::{Economy, EconomyConfig, LedgerEntry};
pub use force::{Ball, ForceApp, ForceConfig, ForceState};
pub use poll::{PollApp, PollConfig, PollMode, PollResult, PollState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppKind {
    Canvas,
    Arena,
    Poll,
    Force,
}

impl AppKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AppKind::Canvas => "canvas",
            AppKind::Arena => "arena",
            AppKind::Poll => "poll",
            AppKind::Force => "force",
        }
    }
}

/// Why an app declined an admitted event.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AppReject {
    #[error("intent predates the camera buffer")]
    StaleIntent,
    #[error("policy rejected: {}", .0.as_str())]
    Policy(RejectReason),
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("enemy spawn too close to the streamer")]
    TooClose,
    #[error("click outside every region")]
    MissedRegion,
    #[error("no round is open")]
    RoundClosed,
    #[error("stroke does not start on a ball")]
    NoAnchor,
    #[error("vote already locked")]
    VoteLocked,
    #[error("no item or message selected")]
    NoSelection,
    #[error("event kind not handled by this app")]
    UnsupportedKind,
}

impl AppReject {
    pub fn reason(&self) -> &str {
        match self {
            AppReject::StaleIntent => "stale_intent",
            AppReject::Policy(r) => r.as_str(),
            AppReject::InsufficientFunds => "insufficient_funds",
            AppReject::TooClose => "too_close",
            AppReject::MissedRegion => "missed_region",
            AppReject::RoundClosed => "round_closed",
            AppReject::NoAnchor => "no_anchor",
            AppReject::VoteLocked => "vote_locked",
            AppReject::NoSelection => "no_selection",
            AppReject::UnsupportedKind => "unsupported_kind",
        }
    }
}

impl From<CompensationError> for AppReject {
    fn from(_: CompensationError) -> Self {
        AppReject::StaleIntent
    }
}

/// Result of handing one event to an app; `Ok` carries a short action label.
pub type Outcome = Result<String, AppReject>;

/// Positions a scripted viewer may aim at, as currently shown by the app.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Landmarks {
    pub streamer: Option<WorldPoint>,
    pub regions: Vec<WorldPoint>,
    pub balls: Vec<WorldPoint>,
}

pub trait App: Send {
    fn kind(&self) -> AppKind;
    fn tick(&mut self, now_ms: i64);
    fn on_context(&mut self, _payload: &ContextPayload, _now_ms: i64) {}
    fn on_event(&mut self, event: &AdmittedEvent, now_ms: i64) -> Outcome;
    /// Back-channel payloads produced since the last call.
    fn drain_updates(&mut self) -> Vec<AppUpdate>;
    fn viewport(&self) -> &Viewport;
    fn landmarks(&self) -> Landmarks;
    /// Queryable state for assertions and replay comparison.
    fn snapshot(&self) -> serde_json::Value;
    fn economy(&self) -> Option<&Economy> {
        None
    }
    /// Admission state, exposed so role and ban lists can be reloaded live.
    fn gatekeeper_mut(&mut self) -> &mut Gatekeeper;
}

/// Camera that moves at constant velocity from `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRig {
    pub start: Vec2,
    /// World units per 100 ms.
    pub velocity_per_tick: Vec2,
    pub extent: Vec2,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self { start: Vec2::ZERO, velocity_per_tick: Vec2::ZERO, extent: Vec2::new(64.0, 32.0) }
    }
}

impl CameraRig {
    /// Ground-truth camera at any time; times before zero hold the start pose.
    pub fn at(&self, t_ms: i64) -> CameraState {
        let t = t_ms.max(0) as f64;
        let center = Vec2::new(
            self.start.x + self.velocity_per_tick.x * t / 100.0,
            self.start.y + self.velocity_per_tick.y * t / 100.0,
        );
        CameraState { center, extent: self.extent, snapshot_ts_ms: t_ms }
    }
}

/// An app's moving camera plus its time-shifted record.
#[derive(Debug, Clone)]
pub struct Viewport {
    rig: CameraRig,
    buffer: CameraBuffer,
}

impl Viewport {
    pub fn new(rig: CameraRig, params: BufferParams) -> Result<Self, CompensationError> {
        CameraState::new(rig.start, rig.extent, 0)?;
        Ok(Self { rig, buffer: CameraBuffer::new(params)? })
    }

    pub fn rig(&self) -> &CameraRig {
        &self.rig
    }

    pub fn buffer(&self) -> &CameraBuffer {
        &self.buffer
    }

    pub fn camera_at(&self, t_ms: i64) -> CameraState {
        self.rig.at(t_ms)
    }

    pub fn record(&mut self, now_ms: i64) {
        if let Err(e) = self.buffer.push_snapshot(self.rig.at(now_ms)) {
            log::warn!("camera snapshot skipped: {e}");
        }
    }

    pub fn resolve(&self, event: &AdmittedEvent) -> Result<Vec<WorldPoint>, AppReject> {
        Ok(self.buffer.resolve(event)?)
    }
}

/// Gate, role table and cooldown bookkeeping bundled for an app.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSection {
    pub gate: GateConfig,
    pub roles: RoleTable,
}

#[derive(Debug, Clone, Default)]
pub struct Gatekeeper {
    pub gate: GateConfig,
    pub roles: RoleTable,
    cooldowns: CooldownState,
}

impl Gatekeeper {
    pub fn new(section: &GateSection) -> Self {
        Self { gate: section.gate.clone(), roles: section.roles.clone(), cooldowns: CooldownState::default() }
    }

    pub fn admit(&mut self, event: &AdmittedEvent, now_ms: i64) -> Result<(), AppReject> {
        match policy::admit(event, &self.gate, &self.roles, &mut self.cooldowns, now_ms, &[]) {
            Verdict::Admit => Ok(()),
            Verdict::Reject(r) => Err(AppReject::Policy(r)),
        }
    }
}

/// Per-app parameters, selected by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppSection {
    pub kind: AppKind,
    pub canvas: CanvasConfig,
    pub arena: ArenaConfig,
    pub poll: PollConfig,
    pub force: ForceConfig,
    pub policy: GateSection,
}

impl Default for AppSection {
    fn default() -> Self {
        Self {
            kind: AppKind::Arena,
            canvas: CanvasConfig::default(),
            arena: ArenaConfig::default(),
            poll: PollConfig::default(),
            force: ForceConfig::default(),
            policy: GateSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid app config: {0}")]
pub struct AppConfigError(pub String);

pub fn build_app(
    section: &AppSection,
    params: BufferParams,
    recognizer: Recognizer,
) -> Result<Box<dyn App>, AppConfigError> {
    let gate = Gatekeeper::new(&section.policy);
    Ok(match section.kind {
        AppKind::Canvas => Box::new(CanvasApp::new(section.canvas.clone(), params, gate, recognizer)?),
        AppKind::Arena => Box::new(ArenaApp::new(section.arena.clone(), params, gate)?),
        AppKind::Poll => Box::new(PollApp::new(section.poll.clone(), params, gate)?),
        AppKind::Force => Box::new(ForceApp::new(section.force.clone(), params, gate)?),
    })
}

impl From<CompensationError> for AppConfigError {
    fn from(e: CompensationError) -> Self {
        AppConfigError(e.to_string())
    }
}

/// One processed event, for the outcome log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeRecord {
    pub ts: i64,
    pub user: String,
    pub outcome: String,
    pub admitted: bool,
}

/// Runs an app's tick schedule and feeds it relay deliveries in time order.
pub struct AppDriver {
    app: Box<dyn App>,
    tick_ms: i64,
    next_tick_ms: i64,
    outcomes: Vec<OutcomeRecord>,
}

impl AppDriver {
    pub fn new(app: Box<dyn App>) -> Self {
        let tick_ms = app.viewport().buffer().params().period_ms;
        Self { app, tick_ms, next_tick_ms: 0, outcomes: Vec::new() }
    }

    pub fn app(&self) -> &dyn App {
        self.app.as_ref()
    }

    pub fn app_mut(&mut self) -> &mut dyn App {
        self.app.as_mut()
    }

    pub fn tick_ms(&self) -> i64 {
        self.tick_ms
    }

    /// Runs every tick scheduled at or before `now_ms`.
    pub fn advance_to(&mut self, now_ms: i64) {
        while self.next_tick_ms <= now_ms {
            self.app.tick(self.next_tick_ms);
            self.next_tick_ms += self.tick_ms;
        }
    }

    pub fn deliver(&mut self, delivery: &AppDelivery) -> Option<Outcome> {
        let ts = delivery.server_ts_ms();
        self.advance_to(ts);
        match delivery {
            AppDelivery::Context { payload, .. } => {
                self.app.on_context(payload, ts);
                None
            }
            AppDelivery::Event(ev) => {
                let outcome = self.app.on_event(ev, ts);
                self.outcomes.push(OutcomeRecord {
                    ts,
                    user: ev.event.user.clone(),
                    outcome: match &outcome {
                        Ok(action) => action.clone(),
                        Err(r) => r.reason().to_string(),
                    },
                    admitted: outcome.is_ok(),
                });
                Some(outcome)
            }
        }
    }

    pub fn drain_updates(&mut self) -> Vec<AppUpdate> {
        self.app.drain_updates()
    }

    pub fn outcomes(&self) -> &[OutcomeRecord] {
        &self.outcomes
    }

    /// Outcome log as JSONL.
    pub fn outcome_log(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        for rec in &self.outcomes {
            serde_json::to_writer(&mut buf, rec).expect("outcome records serialize");
            buf.push(b'\n');
        }
        buf
    }

    pub fn snapshot(&self) -> serde_json::Value {
        self.app.snapshot()
    }
}

/// Re-drives a fresh app with logged deliveries and ticks through `until_ms`.
pub fn replay_into(app: Box<dyn App>, deliveries: &[AppDelivery], until_ms: i64) -> AppDriver {
    let mut driver = AppDriver::new(app);
    for d in deliveries {
        driver.deliver(d);
        driver.drain_updates();
    }
    driver.advance_to(until_ms);
    driver.drain_updates();
    driver
}

pub(crate) fn kv<const N: usize>(pairs: [(&str, String); N]) -> crate::protocol::KvMap {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
