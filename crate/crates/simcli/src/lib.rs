//! Deterministic simulation harness for the spatial-input relay.
//!
//! A [`Scenario`] lists scripted viewers, each with a latency distribution and
//! a timed script. [`run_scenario`] plays it against the relay session and an
//! app on a virtual clock. For every spatial action it records where the
//! viewer meant to click, where latency compensation put it and where naive
//! resolution against the live camera would have put it.

pub mod checks;
pub mod harness;
pub mod loopback;
pub mod metrics;
pub mod replay;
pub mod scenario;
pub mod viewer;

pub use harness::{run_scenario, RunOutput};
pub use loopback::{run_loopback, LoopbackReport};
pub use metrics::{ErrorStats, EventRecord, MetricsReport, Totals};
pub use replay::{replay_log, AppSource, ReplayFailure};
pub use scenario::{Scenario, ScenarioError};

/// Scenarios shipped with the crate, by name.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    ("compensation_moving", include_str!("../scenarios/compensation_moving.json")),
    ("compensation_static", include_str!("../scenarios/compensation_static.json")),
    ("stale_latency", include_str!("../scenarios/stale_latency.json")),
    ("arena_crowd", include_str!("../scenarios/arena_crowd.json")),
    ("poll_grid", include_str!("../scenarios/poll_grid.json")),
    ("force_balls", include_str!("../scenarios/force_balls.json")),
    ("canvas_gestures", include_str!("../scenarios/canvas_gestures.json")),
];

pub fn builtin(name: &str) -> Option<Scenario> {
    BUILTIN_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| Scenario::from_json(json.as_bytes()).expect("built-in scenarios are valid"))
}
