#![no_main]

use libfuzzer_sys::fuzz_target;
use spatial_relay_core::policy::{bans_from_json, RoleTable};

fuzz_target!(|data: &[u8]| {
    let _ = RoleTable::from_json(data);
    let _ = bans_from_json(data);
});
