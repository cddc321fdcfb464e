mod common;

use proptest::prelude::*;
use serde_json::{json, Value};
use spatial_relay_core::protocol::{
    classify_raw_input, decode, encode, EventKind, InputThresholds, NormPoint, ProtocolError,
};

fn np(x: f64, y: f64) -> NormPoint {
    NormPoint::new(x, y).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn round_trip(env in common::envelope()) {
        let bytes = encode(&env).unwrap();
        prop_assert_eq!(decode(&bytes).unwrap(), env);
    }

    /// Dropping any required field from a valid frame makes it undecodable.
    #[test]
    fn missing_field_rejected(env in common::envelope(), pick in any::<prop::sample::Index>()) {
        let mut v: Value = serde_json::from_slice(&encode(&env).unwrap()).unwrap();
        let obj = v.as_object_mut().unwrap();
        // a hello's user is optional
        let is_hello = obj["type"] == "hello";
        let keys: Vec<String> = obj.keys().filter(|k| !(is_hello && k.as_str() == "user")).cloned().collect();
        let key = pick.get(&keys).clone();
        obj.remove(&key);
        let frame = serde_json::to_vec(&v).unwrap();
        prop_assert!(decode(&frame).is_err(), "decoded without {key}");
    }

    #[test]
    fn classify_monotone_in_displacement(
        dx in 0.0..0.5_f64,
        extra in 1e-9..0.4_f64,
        hold in 0..500_u64,
    ) {
        let t = InputThresholds::default();
        let press = np(0.5, 0.5);
        let a = classify_raw_input(press, np(0.5 + dx, 0.5), &[], hold, &t);
        let b = classify_raw_input(press, np(0.5, 0.5), &[np((0.5 + dx + extra).min(1.0), 0.5)], hold, &t);
        if a == EventKind::Gesture && dx + extra <= 0.5 {
            prop_assert_eq!(b, EventKind::Gesture);
        }
    }
}

#[test]
fn bound_violations_are_typed() {
    let base = json!({"type":"mouse_event","seq":1,"user":"a","kind":"click","points":[[0.5,0.5]],
        "offsets_ms":[0],"latency_ms":10,"client_ts_ms":0});
    let cases = [
        ("points", json!([[1.5, 0.5]])),
        ("seq", json!(-1)),
        ("latency_ms", json!(-5)),
        ("user", json!("")),
        ("offsets_ms", json!([3])),
        ("points", json!([[0.1, 0.1], [0.2, 0.2]])),
    ];
    for (field, value) in cases {
        let mut v = base.clone();
        v[field] = value;
        let err = decode(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(err, ProtocolError::InvariantViolation(_)), "{field}: {err:?}");
    }
    let mut v = base.clone();
    v["latency_ms"] = json!("10");
    assert!(matches!(decode(&serde_json::to_vec(&v).unwrap()), Err(ProtocolError::Malformed(_))));
}
