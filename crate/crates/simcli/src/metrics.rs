use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use spatial_relay_core::apps::AppKind;
use spatial_relay_core::WorldPoint;

/// One spatial action as the harness saw it end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_ms: i64,
    pub user: String,
    pub kind: String,
    pub true_latency_ms: u64,
    pub reported_latency_ms: u64,
    pub intended: Vec<WorldPoint>,
    /// Resolution through the camera history; absent when the intent was
    /// older than the buffer.
    pub compensated: Option<Vec<WorldPoint>>,
    /// Resolution through the live camera.
    pub naive: Vec<WorldPoint>,
    pub compensated_error: Option<f64>,
    pub naive_error: f64,
    pub outcome: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

impl ErrorStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        // Nearest-rank percentile.
        let rank = (n * 95).div_ceil(100).max(1);
        Self { count: n, mean: sorted.iter().sum::<f64>() / n as f64, p95: sorted[rank - 1], max: sorted[n - 1] }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    /// Mouse events handed to the relay.
    pub sent: u64,
    pub admitted: u64,
    pub rejected: u64,
    /// Dropped by the relay before reaching the app.
    pub dropped: u64,
    /// Actions a viewer could not perform, e.g. target off screen.
    pub skipped: u64,
    pub contexts: u64,
    pub updates_to_viewers: u64,
}

impl Totals {
    pub fn reconciles(&self) -> bool {
        self.sent == self.admitted + self.rejected + self.dropped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub app: AppKind,
    pub duration_ms: i64,
    pub totals: Totals,
    pub rejections: BTreeMap<String, u64>,
    pub skips: BTreeMap<String, u64>,
    /// Error replies the relay sent to viewers, by code.
    pub relay_errors: BTreeMap<String, u64>,
    /// Both statistics cover the same events: those the history could resolve.
    pub compensated: ErrorStats,
    pub naive: ErrorStats,
    /// Accepted app actions by label.
    pub outcomes: BTreeMap<String, u64>,
    pub events: Vec<EventRecord>,
    pub final_state: serde_json::Value,
}

/// Largest per-point distance between two equally long point lists.
pub fn point_error(a: &[WorldPoint], b: &[WorldPoint]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.distance(*q)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = ErrorStats::from_samples(&xs);
        assert_eq!((s.count, s.mean, s.p95, s.max), (100, 50.5, 95.0, 100.0));
        assert_eq!(ErrorStats::from_samples(&[3.0]).p95, 3.0);
        assert_eq!(ErrorStats::from_samples(&[]), ErrorStats::default());
    }
}
