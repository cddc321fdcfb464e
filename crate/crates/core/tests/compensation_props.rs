use proptest::collection::vec;
use proptest::prelude::*;
use spatial_relay_core::compensation::{CameraBuffer, CameraState, CompensationError};
use spatial_relay_core::protocol::{KvMap, NormPoint, ViewerEvent};
use spatial_relay_core::relay::AdmittedEvent;
use spatial_relay_core::Vec2;

fn cam(center_x: f64, ts: i64) -> CameraState {
    CameraState::new(Vec2::new(center_x, 0.0), Vec2::new(64.0, 32.0), ts).unwrap()
}

/// Pushes snapshots at the given positive gaps; returns the buffer and every pushed timestamp.
fn build(gaps: &[i64]) -> (CameraBuffer, Vec<i64>) {
    let mut b = CameraBuffer::default();
    let mut ts = 0;
    let mut all = Vec::new();
    for &g in gaps {
        ts += g;
        b.push_snapshot(cam(ts as f64, ts)).unwrap();
        all.push(ts);
    }
    (b, all)
}

/// Linear-scan reference for nearest-slot lookup (ties to the older slot).
fn nearest_by_scan(slots: &[i64], intent: i64) -> Option<i64> {
    if intent < *slots.first()? {
        return None;
    }
    let mut best = slots[0];
    for &s in slots {
        if (s - intent).abs() < (best - intent).abs() {
            best = s;
        }
    }
    Some(best)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn horizon_law(gaps in vec(1..400_i64, 1..400)) {
        let (b, _) = build(&gaps);
        prop_assert!(b.len() <= 100);
        prop_assert!(b.covered_ms() <= 9_900);
        let ts: Vec<i64> = b.iter().map(|s| s.snapshot_ts_ms).collect();
        prop_assert!(ts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn lookup_total_above_oldest(gaps in vec(1..300_i64, 1..250), probe in -2_000..80_000_i64) {
        let (b, _) = build(&gaps);
        let slots: Vec<i64> = b.iter().map(|s| s.snapshot_ts_ms).collect();
        match (b.lookup(probe), nearest_by_scan(&slots, probe)) {
            (Ok(s), Some(expect)) => prop_assert_eq!(s.snapshot_ts_ms, expect),
            (Err(CompensationError::StaleIntent { .. }), None) => {}
            (got, expect) => prop_assert!(false, "lookup {:?} vs scan {:?}", got, expect),
        }
    }

    /// With a camera that never moved, resolution ignores latency.
    #[test]
    fn static_camera_equivalence(
        n in 1..200_usize,
        latency in 0..9_000_u64,
        x in 0.0..=1.0_f64,
        y in 0.0..=1.0_f64,
    ) {
        let mut b = CameraBuffer::default();
        for i in 0..n as i64 {
            b.push_snapshot(cam(7.0, i * 100)).unwrap();
        }
        let now = (n as i64 - 1) * 100;
        let ev = |latency| AdmittedEvent {
            event: ViewerEvent::click("v", NormPoint::new(x, y).unwrap(), latency, 0),
            context_snapshot: KvMap::new(),
            server_ts_ms: now,
        };
        let oldest = b.oldest().unwrap().snapshot_ts_ms;
        if now - latency as i64 >= oldest {
            prop_assert_eq!(b.resolve(&ev(latency)).unwrap(), b.resolve(&ev(0)).unwrap());
        } else {
            prop_assert!(b.resolve(&ev(latency)).is_err());
        }
    }
}

#[test]
fn regular_pushes_saturate_at_horizon() {
    let (b, _) = build(&vec![100; 10_000]);
    assert_eq!(b.len(), 100);
    assert_eq!(b.covered_ms(), 9_900);
}
