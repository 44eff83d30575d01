#![no_main]

use ksmpc_core::config::{ConfigBuilder, ScenarioConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut b = ConfigBuilder::new(&ScenarioConfig::default());
    for line in text.lines() {
        let _ = b.apply_override(line);
    }
    let _ = b.build();
});
