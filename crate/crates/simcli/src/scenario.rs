//! Declarative scenario files: who is watching, how late they see the
//! stream, and what they click on.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use spatial_relay_core::apps::{build_app, App, AppSection};
use spatial_relay_core::gesture::Recognizer;
use spatial_relay_core::policy::Role;
use spatial_relay_core::protocol::{validate_username, KvMap};
use spatial_relay_core::BufferParams;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// A millisecond quantity drawn per action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dist {
    Fixed { ms: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std: f64 },
}

impl Default for Dist {
    fn default() -> Self {
        Dist::Fixed { ms: 0.0 }
    }
}

impl Dist {
    fn validate(&self, what: &str) -> Result<(), ScenarioError> {
        let ok = match *self {
            Dist::Fixed { ms } => ms.is_finite(),
            Dist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Dist::Normal { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("{what}: bad distribution parameters {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::Fixed { ms } => ms,
            Dist::Uniform { lo, hi } if lo == hi => lo,
            Dist::Uniform { lo, hi } => rng.random_range(lo..=hi),
            Dist::Normal { mean, std } => Normal::new(mean, std).expect("validated").sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Fixed { ms } => ms,
            Dist::Uniform { lo, hi } => (lo + hi) / 2.0,
            Dist::Normal { mean, .. } => mean,
        }
    }

    /// Lowest value a true latency drawn from this distribution can take.
    fn min(&self) -> f64 {
        match *self {
            Dist::Fixed { ms } => ms,
            Dist::Uniform { lo, .. } => lo,
            Dist::Normal { .. } => 0.0,
        }
    }
}

/// What a scripted viewer aims at, evaluated against the frame they see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    /// A fixed spot in the video frame.
    Norm([f64; 2]),
    /// A fixed world position; skipped while it is off screen.
    World([f64; 2]),
    /// Offset in world units from the streamer's position.
    StreamerOffset([f64; 2]),
    /// Center of a poll region.
    Region(usize),
    /// A ball in the force app, where the viewer last saw it.
    Ball(usize),
    /// A uniformly random spot in the frame.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "do", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionKind {
    Context {
        data: KvMap,
    },
    Click {
        target: Target,
    },
    /// Straight drag from `target` by `by` world units.
    Drag {
        target: Target,
        by: [f64; 2],
        #[serde(default = "default_stroke_ms")]
        duration_ms: u64,
    },
    /// A stroke whose shape is given in frame units relative to `target`.
    Stroke {
        target: Target,
        shape: Vec<[f64; 2]>,
        #[serde(default = "default_stroke_ms")]
        duration_ms: u64,
    },
}

fn default_stroke_ms() -> u64 {
    300
}

impl ActionKind {
    pub fn is_spatial(&self) -> bool {
        !matches!(self, ActionKind::Context { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Repeat {
    pub every_ms: i64,
    pub count: u32,
}

// No deny_unknown_fields here: it does not combine with flatten. The
// flattened action still rejects unknown keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub at_ms: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<Repeat>,
    #[serde(flatten)]
    pub kind: ActionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewerSpec {
    pub user: String,
    #[serde(default)]
    pub role: Option<Role>,
    /// True broadcast delay of what this viewer sees.
    pub latency: Dist,
    /// Added to the true delay to give the reported one.
    #[serde(default)]
    pub report_error: Dist,
    #[serde(default)]
    pub script: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_ms: i64,
    #[serde(default)]
    pub camera_buffer: BufferParams,
    #[serde(default)]
    pub app: AppSection,
    pub viewers: Vec<ViewerSpec>,
}

/// One scheduled action, after expanding repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<'a> {
    pub at_ms: i64,
    pub viewer: usize,
    pub action: &'a ActionKind,
}

/// Upper bound on expanded actions, to keep a typo from allocating forever.
pub const MAX_STEPS: usize = 1_000_000;

impl Scenario {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_slice(bytes)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let bytes =
            std::fs::read(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&bytes)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_ms <= 0 {
            return Err(invalid("duration_ms must be positive"));
        }
        self.camera_buffer.validate().map_err(|e| invalid(e.to_string()))?;
        if self.viewers.is_empty() {
            return Err(invalid("at least one viewer is required"));
        }
        self.app.policy.gate.validate().map_err(|e| invalid(e.to_string()))?;
        // Also catches bad camera rigs and region maps.
        let app = self.build_app()?;
        let landmarks = app.landmarks();
        let mut steps = 0_usize;
        for (i, v) in self.viewers.iter().enumerate() {
            validate_username(&v.user).map_err(|e| invalid(format!("viewer {i}: {e}")))?;
            if self.viewers[..i].iter().any(|o| o.user == v.user) {
                return Err(invalid(format!("duplicate viewer {}", v.user)));
            }
            v.latency.validate(&format!("{} latency", v.user))?;
            if v.latency.min() < 0.0 {
                return Err(invalid(format!("{}: latency must be >= 0", v.user)));
            }
            v.report_error.validate(&format!("{} report_error", v.user))?;
            let mut last = i64::MIN;
            for a in &v.script {
                if a.at_ms < last {
                    return Err(invalid(format!("{}: script is not sorted by at_ms", v.user)));
                }
                last = a.at_ms;
                if a.at_ms < 0 || a.at_ms > self.duration_ms {
                    return Err(invalid(format!("{}: action at {} ms outside the run", v.user, a.at_ms)));
                }
                if let Some(r) = a.repeat {
                    if r.every_ms <= 0 {
                        return Err(invalid(format!("{}: repeat.every_ms must be positive", v.user)));
                    }
                }
                steps = steps.saturating_add(a.repeat.map_or(1, |r| r.count as usize));
                validate_action(&v.user, &a.kind, &landmarks)?;
            }
        }
        if steps > MAX_STEPS {
            return Err(invalid(format!("scenario expands to more than {MAX_STEPS} actions")));
        }
        Ok(())
    }

    /// The app section with each viewer's role added to the role table.
    pub fn app_section(&self) -> AppSection {
        let mut section = self.app.clone();
        for v in &self.viewers {
            if let Some(role) = v.role {
                section.policy.roles.set(v.user.clone(), role);
            }
        }
        section
    }

    pub fn build_app(&self) -> Result<Box<dyn App>, ScenarioError> {
        build_app(&self.app_section(), self.camera_buffer, Recognizer::default()).map_err(|e| invalid(e.to_string()))
    }

    /// All actions in time order. Ties go to the lower viewer index, then
    /// to script order.
    pub fn timeline(&self) -> Vec<Step<'_>> {
        let mut steps = Vec::new();
        for (viewer, v) in self.viewers.iter().enumerate() {
            for a in &v.script {
                let (every, count) = a.repeat.map_or((0, 1), |r| (r.every_ms, r.count));
                for k in 0..count {
                    let at_ms = match every.checked_mul(i64::from(k)).and_then(|d| d.checked_add(a.at_ms)) {
                        Some(t) if t <= self.duration_ms => t,
                        _ => break,
                    };
                    steps.push(Step { at_ms, viewer, action: &a.kind });
                }
            }
        }
        // Stable, so script order survives among equal keys.
        steps.sort_by_key(|s| (s.at_ms, s.viewer));
        steps
    }

    /// Mean true latency over all viewers.
    pub fn mean_latency_ms(&self) -> f64 {
        self.viewers.iter().map(|v| v.latency.mean()).sum::<f64>() / self.viewers.len() as f64
    }

    pub fn camera_moves(&self) -> bool {
        let v = self.rig().velocity_per_tick;
        v.x != 0.0 || v.y != 0.0
    }

    pub fn rig(&self) -> spatial_relay_core::apps::CameraRig {
        use spatial_relay_core::apps::AppKind;
        match self.app.kind {
            AppKind::Arena => self.app.arena.camera,
            AppKind::Canvas => self.app.canvas.camera,
            AppKind::Poll => self.app.poll.camera,
            AppKind::Force => self.app.force.camera,
        }
    }
}

fn validate_action(
    user: &str,
    action: &ActionKind,
    landmarks: &spatial_relay_core::apps::Landmarks,
) -> Result<(), ScenarioError> {
    let check_target = |t: &Target| -> Result<(), ScenarioError> {
        let ok = match *t {
            Target::Norm([x, y]) => (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y),
            Target::World([x, y]) | Target::StreamerOffset([x, y]) => x.is_finite() && y.is_finite(),
            Target::Region(i) => i < landmarks.regions.len(),
            Target::Ball(i) => i < landmarks.balls.len(),
            Target::Random => true,
        };
        if !ok {
            return Err(invalid(format!("{user}: target {t:?} does not exist in this app")));
        }
        if matches!(t, Target::StreamerOffset(_)) && landmarks.streamer.is_none() {
            return Err(invalid(format!("{user}: this app has no streamer to aim at")));
        }
        Ok(())
    };
    match action {
        ActionKind::Context { .. } => Ok(()),
        ActionKind::Click { target } => check_target(target),
        ActionKind::Drag { target, by, .. } => {
            if !(by[0].is_finite() && by[1].is_finite()) {
                return Err(invalid(format!("{user}: drag vector must be finite")));
            }
            check_target(target)
        }
        ActionKind::Stroke { target, shape, .. } => {
            if shape.len() < 2 {
                return Err(invalid(format!("{user}: a stroke needs at least two points")));
            }
            if shape.iter().flatten().any(|c| !c.is_finite()) {
                return Err(invalid(format!("{user}: stroke shape must be finite")));
            }
            check_target(target)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(script: &str) -> String {
        format!(
            r#"{{"duration_ms": 1000, "viewers": [{{"user": "ann", "latency": {{"dist": "fixed", "ms": 500}}, "script": {script}}}]}}"#
        )
    }

    #[test]
    fn parses_actions_and_targets() {
        let s = Scenario::from_json(
            minimal(
                r#"[{"at_ms": 0, "do": "context", "data": {"item": "torch"}},
                    {"at_ms": 100, "do": "click", "target": {"norm": [0.5, 0.5]}, "repeat": {"every_ms": 200, "count": 3}},
                    {"at_ms": 150, "do": "click", "target": "random"},
                    {"at_ms": 900, "do": "drag", "target": {"streamer_offset": [12, 0]}, "by": [3, 4]}]"#,
            )
            .as_bytes(),
        )
        .unwrap();
        let times: Vec<i64> = s.timeline().iter().map(|st| st.at_ms).collect();
        assert_eq!(times, vec![0, 100, 150, 300, 500, 900]);
    }

    #[test]
    fn repeats_stop_at_duration() {
        let s = Scenario::from_json(
            minimal(r#"[{"at_ms": 900, "do": "click", "target": "random", "repeat": {"every_ms": 50, "count": 10}}]"#)
                .as_bytes(),
        )
        .unwrap();
        assert_eq!(s.timeline().len(), 3);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let bad = [
            minimal(
                r#"[{"at_ms": 500, "do": "click", "target": "random"}, {"at_ms": 100, "do": "click", "target": "random"}]"#,
            ),
            minimal(r#"[{"at_ms": 5000, "do": "click", "target": "random"}]"#),
            minimal(r#"[{"at_ms": 0, "do": "click", "target": {"norm": [1.5, 0.5]}}]"#),
            minimal(r#"[{"at_ms": 0, "do": "click", "target": {"region": 0}}]"#),
            minimal(r#"[{"at_ms": 0, "do": "stroke", "target": "random", "shape": [[0, 0]]}]"#),
            minimal(r#"[{"at_ms": 0, "do": "teleport"}]"#),
            r#"{"duration_ms": 1000, "viewers": []}"#.to_string(),
            r#"{"duration_ms": 1000, "viewers": [{"user": "a", "latency": {"dist": "uniform", "lo": 5, "hi": 1}}]}"#
                .to_string(),
            r#"{"duration_ms": 1000, "viewers": [{"user": "a", "latency": {"dist": "fixed", "ms": -1}}]}"#.to_string(),
            r#"{"duration_ms": 0, "viewers": [{"user": "a", "latency": {"dist": "fixed", "ms": 1}}]}"#.to_string(),
        ];
        for b in bad {
            assert!(Scenario::from_json(b.as_bytes()).is_err(), "accepted {b}");
        }
    }

    #[test]
    fn dist_sampling() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert_eq!(Dist::Fixed { ms: 7.0 }.sample(&mut rng), 7.0);
        for _ in 0..100 {
            let x = Dist::Uniform { lo: 200.0, hi: 2000.0 }.sample(&mut rng);
            assert!((200.0..=2000.0).contains(&x));
        }
        assert_eq!(Dist::Normal { mean: 3.0, std: 0.0 }.sample(&mut rng), 3.0);
    }
}
