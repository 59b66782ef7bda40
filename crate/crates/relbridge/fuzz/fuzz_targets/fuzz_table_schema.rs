#![no_main]

//! Per-table schema sidecar parsing over arbitrary JSON-ish bytes.

use libfuzzer_sys::fuzz_target;
use relbridge::table::parse_table_schema;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_table_schema(text);
});
