#![no_main]

use libfuzzer_sys::fuzz_target;
use spatial_relay_core::protocol::{decode, encode};

// Anything that decodes must re-encode and decode to the same envelope.
fuzz_target!(|data: &[u8]| {
    if let Ok(env) = decode(data) {
        let bytes = encode(&env).expect("decoded envelopes are valid");
        assert_eq!(decode(&bytes).expect("re-encoded frame decodes"), env);
    }
});
