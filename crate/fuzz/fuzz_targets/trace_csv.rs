#![no_main]

use ksmpc_core::output::{parse_trace_csv, trace_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_trace_csv(text) {
        if records.iter().all(|r| r.time.is_finite()) {
            // Parsed records re-serialise to something that parses to the same shape.
            let again = parse_trace_csv(&trace_csv(&records)).unwrap();
            assert_eq!(again.len(), records.len());
        }
    }
});
