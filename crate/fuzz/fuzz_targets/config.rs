#![no_main]

use libfuzzer_sys::fuzz_target;
use spatial_relay_core::Config;

fuzz_target!(|data: &[u8]| {
    let _ = Config::from_json_slice(data);
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Config::from_toml_str(text);
    }
});
