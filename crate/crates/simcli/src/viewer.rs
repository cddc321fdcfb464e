//! Scripted viewers. Each one looks at the app as it was `latency` ago and
//! aims its input at what it sees there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_relay_core::apps::{CameraRig, Landmarks};
use spatial_relay_core::protocol::{ContextPayload, Message, NormPoint, ViewerEvent};
use spatial_relay_core::{CameraState, Vec2, WorldPoint};

use crate::scenario::{ActionKind, Target, ViewerSpec};

/// Points in a synthesized drag stroke.
const DRAG_POINTS: usize = 6;

/// An input ready to send, plus where the viewer meant it to land.
#[derive(Debug, Clone, PartialEq)]
pub struct Planned {
    pub message: Message,
    /// Empty for context messages.
    pub intended: Vec<WorldPoint>,
    pub true_latency_ms: u64,
    pub reported_latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Send(Planned),
    /// The viewer could not act, e.g. the target was off screen.
    Skip(&'static str),
}

pub struct ScriptedViewer<'a> {
    pub spec: &'a ViewerSpec,
    rng: ChaCha8Rng,
}

impl<'a> ScriptedViewer<'a> {
    /// Each viewer draws from its own stream of the scenario seed, so adding a
    /// viewer does not change what the others do.
    pub fn new(spec: &'a ViewerSpec, seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        Self { spec, rng }
    }

    pub fn user(&self) -> &str {
        &self.spec.user
    }

    /// Decides what to send at `now_ms`. `landmarks_at` returns what the app
    /// showed at a past instant.
    pub fn plan(
        &mut self,
        action: &ActionKind,
        now_ms: i64,
        rig: &CameraRig,
        landmarks_at: &dyn Fn(i64) -> Landmarks,
    ) -> Plan {
        let user = self.spec.user.clone();
        if let ActionKind::Context { data } = action {
            return Plan::Send(Planned {
                message: Message::Context(ContextPayload::new(user, data.clone())),
                intended: Vec::new(),
                true_latency_ms: 0,
                reported_latency_ms: 0,
            });
        }
        let true_latency = self.spec.latency.sample(&mut self.rng).max(0.0).round();
        let error = self.spec.report_error.sample(&mut self.rng);
        let reported = (true_latency + error).max(0.0).round();
        let (true_latency_ms, reported_latency_ms) = (true_latency as u64, reported as u64);
        let seen_ms = now_ms - true_latency_ms as i64;
        let cam = rig.at(seen_ms);
        let Some((anchor_norm, anchor_world)) = self.aim(*action_target(action), &cam, seen_ms, landmarks_at) else {
            return Plan::Skip("off_screen");
        };

        let (world, durations) = match action {
            ActionKind::Click { .. } => (vec![anchor_world], 0),
            ActionKind::Drag { by, duration_ms, .. } => {
                let by = Vec2::new(by[0], by[1]);
                let pts = (0..DRAG_POINTS).map(|i| anchor_world + by * (i as f64 / (DRAG_POINTS - 1) as f64)).collect();
                (pts, *duration_ms)
            }
            ActionKind::Stroke { shape, duration_ms, .. } => {
                let mut pts = Vec::with_capacity(shape.len());
                for s in shape {
                    let Ok(p) = NormPoint::new(anchor_norm.x + s[0], anchor_norm.y + s[1]) else {
                        return Plan::Skip("off_screen");
                    };
                    pts.push(cam.to_world(p));
                }
                (pts, *duration_ms)
            }
            ActionKind::Context { .. } => unreachable!("handled above"),
        };
        let mut norm = Vec::with_capacity(world.len());
        for w in &world {
            match to_norm(&cam, *w) {
                Some(p) => norm.push(p),
                None => return Plan::Skip("off_screen"),
            }
        }
        let event = if let ActionKind::Click { .. } = action {
            ViewerEvent::click(user, norm[0], reported_latency_ms, now_ms)
        } else {
            let n = norm.len() as u64;
            let offsets = (0..n).map(|i| durations * i / (n - 1)).collect();
            ViewerEvent::gesture(user, norm, offsets, reported_latency_ms, now_ms)
        };
        // The intent is measured where the viewer put the pointer, which for
        // world targets differs from `world` only by rounding.
        let intended = event.points.iter().map(|&p| cam.to_world(p)).collect();
        Plan::Send(Planned { message: Message::MouseEvent(event), intended, true_latency_ms, reported_latency_ms })
    }

    /// Frame and world position of a target, or `None` when off screen.
    fn aim(
        &mut self,
        target: Target,
        cam: &CameraState,
        seen_ms: i64,
        landmarks_at: &dyn Fn(i64) -> Landmarks,
    ) -> Option<(Vec2, WorldPoint)> {
        let world = match target {
            Target::Norm([x, y]) => {
                let p = NormPoint::new(x, y).ok()?;
                return Some((Vec2::new(x, y), cam.to_world(p)));
            }
            Target::Random => {
                let p = NormPoint::new(self.rng.random_range(0.0..=1.0), self.rng.random_range(0.0..=1.0)).ok()?;
                return Some((Vec2::new(p.x(), p.y()), cam.to_world(p)));
            }
            Target::World([x, y]) => Vec2::new(x, y),
            // The streamer is kept at the center of the frame.
            Target::StreamerOffset([dx, dy]) => cam.center + Vec2::new(dx, dy),
            Target::Region(i) => *landmarks_at(seen_ms).regions.get(i)?,
            Target::Ball(i) => *landmarks_at(seen_ms).balls.get(i)?,
        };
        let p = to_norm(cam, world)?;
        Some((Vec2::new(p.x(), p.y()), world))
    }
}

fn action_target(action: &ActionKind) -> &Target {
    match action {
        ActionKind::Click { target } | ActionKind::Drag { target, .. } | ActionKind::Stroke { target, .. } => target,
        ActionKind::Context { .. } => unreachable!("contexts have no target"),
    }
}

fn to_norm(cam: &CameraState, w: WorldPoint) -> Option<NormPoint> {
    let f = cam.to_frame(w);
    NormPoint::new(f.x, f.y).ok()
}
