#![no_main]

use ksmpc_core::config::{ConfigBuilder, ScenarioConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut b = ConfigBuilder::new(&ScenarioConfig::default());
    if b.apply_json(text).is_ok() {
        if let Ok(cfg) = b.build() {
            cfg.validate().unwrap();
        }
    }
});
