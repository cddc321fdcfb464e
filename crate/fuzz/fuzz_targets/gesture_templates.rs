#![no_main]

use libfuzzer_sys::fuzz_target;
use spatial_relay_core::gesture::{Recognizer, Stroke, NEXT_IDEAL};
use spatial_relay_core::Vec2;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = Recognizer::from_json(data, 0.7) {
        let stroke = Stroke::new(NEXT_IDEAL.iter().copied().map(Vec2::from).collect()).unwrap();
        let got = r.classify(&stroke);
        assert!(got.score.is_finite());
    }
});
