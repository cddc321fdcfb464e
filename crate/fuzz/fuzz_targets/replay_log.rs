#![no_main]

use libfuzzer_sys::fuzz_target;
use spatial_relay_core::relay::Session;

// A log that loads must export to a log that loads into the same deliveries.
fuzz_target!(|data: &[u8]| {
    if let Ok((session, deliveries)) = Session::from_replay(data) {
        let again = session.export_replay();
        let (_, redelivered) = Session::from_replay(&again).expect("exported logs reload");
        assert_eq!(redelivered, deliveries);
    }
});
