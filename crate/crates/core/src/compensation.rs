//! Broadcast-latency compensation.
//!
//! The app records its visible viewport into a [`CameraBuffer`] once per tick.
//! A viewer's event is resolved against the snapshot nearest to the moment the
//! viewer was looking at (`server receive time - reported latency`), not
//! against the live camera.

use std::collections::VecDeque;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Vec2, WorldPoint};
use crate::protocol::NormPoint;
use crate::relay::AdmittedEvent;

pub const DEFAULT_CAPACITY: usize = 100;
pub const DEFAULT_PERIOD_MS: i64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompensationError {
    #[error("snapshot at {got} ms is not after the latest snapshot at {latest} ms")]
    NonMonotonicTimestamp { latest: i64, got: i64 },
    #[error("intent at {intent} ms predates the oldest retained snapshot at {oldest} ms")]
    StaleIntent { intent: i64, oldest: i64 },
    #[error("camera buffer is empty")]
    EmptyBuffer,
    #[error("camera extent must be positive and finite")]
    InvalidExtent,
    #[error("invalid buffer parameters: {0}")]
    InvalidParams(String),
}

/// The app's visible viewport at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraState {
    pub center: Vec2,
    /// Visible width and height in world units.
    pub extent: Vec2,
    pub snapshot_ts_ms: i64,
}

impl CameraState {
    pub fn new(center: Vec2, extent: Vec2, snapshot_ts_ms: i64) -> Result<Self, CompensationError> {
        if !(extent.x > 0.0 && extent.y > 0.0 && extent.is_finite() && center.is_finite()) {
            return Err(CompensationError::InvalidExtent);
        }
        Ok(Self { center, extent, snapshot_ts_ms })
    }

    /// Maps a frame-relative point into world space through this viewport.
    pub fn to_world(&self, p: NormPoint) -> WorldPoint {
        self.center + (Vec2::new(p.x(), p.y()) - Vec2::new(0.5, 0.5)).scale_by(self.extent)
    }

    /// Inverse of [`to_world`](Self::to_world); the result may fall outside the frame.
    pub fn to_frame(&self, w: WorldPoint) -> Vec2 {
        let rel = w - self.center;
        Vec2::new(0.5 + rel.x / self.extent.x, 0.5 + rel.y / self.extent.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferParams {
    pub capacity: usize,
    pub period_ms: i64,
}

impl Default for BufferParams {
    fn default() -> Self {
        Self { capacity: DEFAULT_CAPACITY, period_ms: DEFAULT_PERIOD_MS }
    }
}

impl BufferParams {
    pub fn validate(&self) -> Result<(), CompensationError> {
        if self.capacity == 0 {
            return Err(CompensationError::InvalidParams("capacity must be at least 1".into()));
        }
        if self.period_ms <= 0 {
            return Err(CompensationError::InvalidParams("period_ms must be positive".into()));
        }
        Ok(())
    }

    /// Largest allowed gap between the newest and oldest retained snapshot.
    pub fn horizon_ms(&self) -> i64 {
        (self.capacity as i64 - 1) * self.period_ms
    }
}

/// Ring of timestamped viewport snapshots.
///
/// Slots are evicted once more than `capacity` are held, and also once they
/// fall more than `(capacity - 1) * period_ms` behind the newest slot, so the
/// retained span never exceeds the horizon even if a tick is skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraBuffer {
    slots: VecDeque<CameraState>,
    params: BufferParams,
}

impl Default for CameraBuffer {
    fn default() -> Self {
        Self::new(BufferParams::default()).expect("default params are valid")
    }
}

impl CameraBuffer {
    pub fn new(params: BufferParams) -> Result<Self, CompensationError> {
        params.validate()?;
        Ok(Self { slots: VecDeque::with_capacity(params.capacity), params })
    }

    pub fn params(&self) -> BufferParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn oldest(&self) -> Option<&CameraState> {
        self.slots.front()
    }

    pub fn latest(&self) -> Option<&CameraState> {
        self.slots.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CameraState> {
        self.slots.iter()
    }

    /// Span between the newest and oldest retained snapshot.
    pub fn covered_ms(&self) -> i64 {
        match (self.oldest(), self.latest()) {
            (Some(o), Some(l)) => l.snapshot_ts_ms - o.snapshot_ts_ms,
            _ => 0,
        }
    }

    pub fn push_snapshot(&mut self, state: CameraState) -> Result<(), CompensationError> {
        if let Some(latest) = self.latest() {
            if state.snapshot_ts_ms <= latest.snapshot_ts_ms {
                return Err(CompensationError::NonMonotonicTimestamp {
                    latest: latest.snapshot_ts_ms,
                    got: state.snapshot_ts_ms,
                });
            }
        }
        self.slots.push_back(state);
        while self.slots.len() > self.params.capacity {
            self.slots.pop_front();
        }
        let floor = state.snapshot_ts_ms - self.params.horizon_ms();
        while self.slots.front().is_some_and(|s| s.snapshot_ts_ms < floor) {
            self.slots.pop_front();
        }
        Ok(())
    }

    /// Snapshot nearest to `intent_ts_ms`; ties go to the older slot and
    /// intents in the future clamp to the newest slot.
    pub fn lookup(&self, intent_ts_ms: i64) -> Result<&CameraState, CompensationError> {
        let oldest = self.oldest().ok_or(CompensationError::EmptyBuffer)?;
        if intent_ts_ms < oldest.snapshot_ts_ms {
            return Err(CompensationError::StaleIntent { intent: intent_ts_ms, oldest: oldest.snapshot_ts_ms });
        }
        let idx = self.slots.partition_point(|s| s.snapshot_ts_ms < intent_ts_ms);
        if idx == self.slots.len() {
            return Ok(&self.slots[idx - 1]);
        }
        let newer = &self.slots[idx];
        if newer.snapshot_ts_ms == intent_ts_ms || idx == 0 {
            return Ok(newer);
        }
        let older = &self.slots[idx - 1];
        if intent_ts_ms - older.snapshot_ts_ms <= newer.snapshot_ts_ms - intent_ts_ms {
            Ok(older)
        } else {
            Ok(newer)
        }
    }

    /// Resolves every point of the event against the snapshot the viewer saw
    /// when the stroke started.
    pub fn resolve(&self, event: &AdmittedEvent) -> Result<Vec<WorldPoint>, CompensationError> {
        let cam = self.lookup(event.intent_ts_ms())?;
        Ok(event.event.points.iter().map(|&p| cam.to_world(p)).collect())
    }
}

/// Latency-blind baseline: maps the event through the live camera.
pub fn resolve_naive(live: &CameraState, event: &AdmittedEvent) -> Vec<WorldPoint> {
    event.event.points.iter().map(|&p| live.to_world(p)).collect()
}

/// Duration of the client-side pending-input spinner; equal to the reported latency.
pub fn spinner_duration(latency_ms: u64) -> u64 {
    latency_ms
}

/// Camera buffer shared between the tick thread (single writer) and any
/// number of resolving readers. Readers always see whole snapshots.
#[derive(Debug, Clone, Default)]
pub struct SharedCameraBuffer {
    inner: Arc<RwLock<CameraBuffer>>,
}

impl SharedCameraBuffer {
    pub fn new(buffer: CameraBuffer) -> Self {
        Self { inner: Arc::new(RwLock::new(buffer)) }
    }

    pub fn push_snapshot(&self, state: CameraState) -> Result<(), CompensationError> {
        self.inner.write().push_snapshot(state)
    }

    pub fn lookup(&self, intent_ts_ms: i64) -> Result<CameraState, CompensationError> {
        self.inner.read().lookup(intent_ts_ms).copied()
    }

    pub fn resolve(&self, event: &AdmittedEvent) -> Result<Vec<WorldPoint>, CompensationError> {
        self.inner.read().resolve(event)
    }

    pub fn len(&self) -> usize {
        self.inner.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.read().is_empty()
    }
}
