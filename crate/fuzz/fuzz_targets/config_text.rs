#![no_main]

use ksmpc_core::config::{ConfigBuilder, ScenarioConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut b = ConfigBuilder::new(&ScenarioConfig::default());
    if b.apply_text(text).is_ok() {
        if let Ok(cfg) = b.build() {
            // Anything accepted must survive a JSON round trip unchanged.
            let json = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ksmpc_core::config::parse_config(&json).unwrap(), cfg);
        }
    }
});
