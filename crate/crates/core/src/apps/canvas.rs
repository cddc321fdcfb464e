//! Shared drawing canvas. In control mode a stroke is read as a track-skip
//! gesture instead of being painted.

use serde::{Deserialize, Serialize};

use super::{kv, App, AppConfigError, AppKind, AppReject, CameraRig, Gatekeeper, Landmarks, Outcome, Viewport};
use crate::compensation::BufferParams;
use crate::geom::WorldPoint;
use crate::gesture::{Command, Recognizer, Stroke};
use crate::protocol::{AppUpdate, ContextPayload, EventKind};
use crate::relay::AdmittedEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanvasConfig {
    pub camera: CameraRig,
    pub default_color: String,
    pub track_count: u32,
}

impl Default for CanvasConfig {
    fn default() -> Self {
        Self { camera: CameraRig::default(), default_color: "#000000".into(), track_count: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrokeRecord {
    pub user: String,
    pub color: String,
    pub points: Vec<WorldPoint>,
    pub ts: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanvasState {
    pub strokes: Vec<StrokeRecord>,
    pub track: u32,
}

pub struct CanvasApp {
    config: CanvasConfig,
    viewport: Viewport,
    gate: Gatekeeper,
    recognizer: Recognizer,
    state: CanvasState,
    updates: Vec<AppUpdate>,
}

impl CanvasApp {
    pub fn new(
        config: CanvasConfig,
        params: BufferParams,
        gate: Gatekeeper,
        recognizer: Recognizer,
    ) -> Result<Self, AppConfigError> {
        if config.track_count == 0 {
            return Err(AppConfigError("canvas track_count must be at least 1".into()));
        }
        let viewport = Viewport::new(config.camera, params)?;
        Ok(Self {
            config,
            viewport,
            gate,
            recognizer,
            state: CanvasState { strokes: Vec::new(), track: 0 },
            updates: Vec::new(),
        })
    }

    pub fn state(&self) -> &CanvasState {
        &self.state
    }

    fn control(&mut self, event: &AdmittedEvent) -> Outcome {
        let stroke = Stroke::from_event(&event.event).map_err(|_| AppReject::UnsupportedKind)?;
        let recognized = self.recognizer.classify(&stroke);
        let n = self.config.track_count;
        self.state.track = match recognized.command {
            Command::Next => (self.state.track + 1) % n,
            Command::Previous => (self.state.track + n - 1) % n,
            Command::Unrecognized => return Ok("gesture:unrecognized".into()),
        };
        self.updates.push(AppUpdate::to_all(kv([
            ("command", recognized.command.as_str().to_string()),
            ("track", self.state.track.to_string()),
        ])));
        Ok(format!("gesture:{}", recognized.command.as_str()))
    }
}

impl App for CanvasApp {
    fn kind(&self) -> AppKind {
        AppKind::Canvas
    }

    fn tick(&mut self, now_ms: i64) {
        self.viewport.record(now_ms);
    }

    fn on_context(&mut self, payload: &ContextPayload, _now_ms: i64) {
        match payload.data.get("command").map(String::as_str) {
            Some("undo") => {
                if let Some(i) = self.state.strokes.iter().rposition(|s| s.user == payload.user) {
                    self.state.strokes.remove(i);
                }
            }
            Some("clear") => self.state.strokes.retain(|s| s.user != payload.user),
            _ => {}
        }
    }

    fn on_event(&mut self, event: &AdmittedEvent, now_ms: i64) -> Outcome {
        if event.event.kind != EventKind::Gesture {
            return Err(AppReject::UnsupportedKind);
        }
        self.gate.admit(event, now_ms)?;
        if event.context_snapshot.get("mode").map(String::as_str) == Some("control") {
            return self.control(event);
        }
        let points = self.viewport.resolve(event)?;
        let color = event.context_snapshot.get("color").cloned().unwrap_or_else(|| self.config.default_color.clone());
        self.state.strokes.push(StrokeRecord { user: event.user().to_string(), color, points, ts: now_ms });
        Ok("stroke".into())
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
        Landmarks::default()
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "canvas", "state": self.state })
    }
}
