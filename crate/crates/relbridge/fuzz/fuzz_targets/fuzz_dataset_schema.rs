#![no_main]

//! Dataset-level schema.json parsing and validation.

use libfuzzer_sys::fuzz_target;
use relbridge::datasets::parse_dataset_schema;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_dataset_schema(text);
});
