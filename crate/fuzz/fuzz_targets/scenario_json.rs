#![no_main]

use libfuzzer_sys::fuzz_target;
use simcli::Scenario;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = Scenario::from_json(data) {
        if s.validate().is_ok() {
            // Validation bounds the step count, so expanding is safe.
            let steps = s.timeline();
            assert!(steps.windows(2).all(|w| w[0].at_ms <= w[1].at_ms));
        }
    }
});
