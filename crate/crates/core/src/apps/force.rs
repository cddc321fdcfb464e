//! Ball-flick force poll. Viewers drag from a ball to prime an impulse; at the
//! end of each round the per-ball mean impulse is clamped and applied.

use serde::{Deserialize, Serialize};

use super::{kv, App, AppConfigError, AppKind, AppReject, CameraRig, Gatekeeper, Landmarks, Outcome, Viewport};
use crate::aggregation::{AggregationError, ForceRound};
use crate::compensation::BufferParams;
use crate::geom::{Rect, Vec2};
use crate::protocol::{AppUpdate, EventKind};
use crate::relay::AdmittedEvent;

/// Simulation step per tick, in seconds.
const DT_S: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceConfig {
    pub camera: CameraRig,
    pub balls: Vec<Vec2>,
    pub bounds: Rect,
    pub snap_radius: f64,
    pub round_ms: i64,
    pub gap_ms: i64,
    /// Velocity multiplier applied every tick.
    pub damping: f64,
    pub max_impulse: f64,
}

impl Default for ForceConfig {
    fn default() -> Self {
        Self {
            camera: CameraRig::default(),
            balls: vec![Vec2::new(-16.0, 0.0), Vec2::new(0.0, 0.0), Vec2::new(16.0, 0.0)],
            bounds: Rect::new(Vec2::new(-32.0, -16.0), Vec2::new(32.0, 16.0)),
            snap_radius: 3.0,
            round_ms: 5_000,
            gap_ms: 1_000,
            damping: 0.98,
            max_impulse: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ball {
    pub pos: Vec2,
    pub vel: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForceState {
    pub balls: Vec<Ball>,
    pub current: Option<ForceRound>,
    pub next_open_ms: i64,
    pub rounds_closed: u32,
    /// Clamped impulses applied at the most recent close.
    pub last_impulses: Vec<Vec2>,
}

pub struct ForceApp {
    config: ForceConfig,
    viewport: Viewport,
    gate: Gatekeeper,
    state: ForceState,
    updates: Vec<AppUpdate>,
}

impl ForceApp {
    pub fn new(config: ForceConfig, params: BufferParams, gate: Gatekeeper) -> Result<Self, AppConfigError> {
        if config.balls.is_empty() || !config.bounds.is_valid() {
            return Err(AppConfigError("force app needs at least one ball and valid bounds".into()));
        }
        if config.balls.iter().any(|b| !config.bounds.contains(*b)) {
            return Err(AppConfigError("every ball must start inside the bounds".into()));
        }
        if !(config.snap_radius > 0.0) || !(config.max_impulse > 0.0) || !(0.0..=1.0).contains(&config.damping) {
            return Err(AppConfigError("force app needs snap_radius > 0, max_impulse > 0, damping in [0,1]".into()));
        }
        if config.round_ms <= 0 || config.gap_ms < 0 {
            return Err(AppConfigError("force app needs round_ms > 0 and gap_ms >= 0".into()));
        }
        let viewport = Viewport::new(config.camera, params)?;
        let state = ForceState {
            balls: config.balls.iter().map(|&pos| Ball { pos, vel: Vec2::ZERO }).collect(),
            current: None,
            next_open_ms: 0,
            rounds_closed: 0,
            last_impulses: Vec::new(),
        };
        Ok(Self { config, viewport, gate, state, updates: Vec::new() })
    }

    pub fn state(&self) -> &ForceState {
        &self.state
    }

    fn step_balls(&mut self) {
        let Rect { min, max } = self.config.bounds;
        for b in &mut self.state.balls {
            b.pos = b.pos + b.vel * DT_S;
            if b.pos.x < min.x || b.pos.x >= max.x {
                b.vel.x = -b.vel.x;
                b.pos.x = b.pos.x.clamp(min.x, max.x);
            }
            if b.pos.y < min.y || b.pos.y >= max.y {
                b.vel.y = -b.vel.y;
                b.pos.y = b.pos.y.clamp(min.y, max.y);
            }
            b.vel = b.vel * self.config.damping;
        }
    }

    fn close_round(&mut self, round: ForceRound, now_ms: i64) {
        let means = round.close_force(now_ms).expect("deadline reached");
        let impulses: Vec<Vec2> = means.into_iter().map(|m| m.clamp_length(self.config.max_impulse)).collect();
        for (ball, impulse) in self.state.balls.iter_mut().zip(&impulses) {
            ball.vel = ball.vel + *impulse;
        }
        self.state.last_impulses = impulses;
        self.state.rounds_closed += 1;
        self.state.next_open_ms = now_ms + self.config.gap_ms;
        self.updates.push(AppUpdate::to_all(kv([("round", "closed".to_string())])));
    }

    fn open_round(&mut self, now_ms: i64) {
        let anchors = self.state.balls.iter().map(|b| b.pos).collect();
        let round = ForceRound::new(anchors, self.config.snap_radius, now_ms + self.config.round_ms)
            .expect("snap radius validated at construction");
        self.state.current = Some(round);
        self.updates.push(AppUpdate::to_all(kv([("round", "open".to_string())])));
    }
}

impl App for ForceApp {
    fn kind(&self) -> AppKind {
        AppKind::Force
    }

    fn tick(&mut self, now_ms: i64) {
        self.viewport.record(now_ms);
        self.step_balls();
        match self.state.current.take() {
            Some(round) if now_ms >= round.deadline_ms() => self.close_round(round, now_ms),
            Some(round) => self.state.current = Some(round),
            None => {}
        }
        if self.state.current.is_none() && now_ms >= self.state.next_open_ms {
            self.open_round(now_ms);
        }
    }

    fn on_event(&mut self, event: &AdmittedEvent, now_ms: i64) -> Outcome {
        if event.event.kind != EventKind::Gesture {
            return Err(AppReject::UnsupportedKind);
        }
        let stroke = self.viewport.resolve(event)?;
        let Some(round) = self.state.current.as_mut() else {
            return Err(AppReject::RoundClosed);
        };
        if now_ms >= round.deadline_ms() {
            return Err(AppReject::RoundClosed);
        }
        if round.snap(stroke[0]).is_none() {
            return Err(AppReject::NoAnchor);
        }
        self.gate.admit(event, now_ms)?;
        match round.prime_force(event.user(), &stroke, now_ms) {
            Ok(prime) => Ok(format!("prime:{}", prime.anchor)),
            Err(AggregationError::NoAnchor) => Err(AppReject::NoAnchor),
            Err(_) => Err(AppReject::RoundClosed),
        }
    }

    fn drain_updates(&mut self) -> Vec<AppUpdate> {
        std::mem::take(&mut self.updates)
    }

    fn gatekeeper_mut(&mut self) -> &mut Gatekeeper {
        &mut self.gate
    }

    fn viewport(&self) -> &Viewport {
        &self.viewport
    }

    fn landmarks(&self) -> Landmarks {
        let balls = match &self.state.current {
            Some(round) => round.anchors().to_vec(),
            None => self.state.balls.iter().map(|b| b.pos).collect(),
        };
        Landmarks { balls, ..Landmarks::default() }
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "force", "state": self.state })
    }
}
