#![no_main]

//! Run-config JSON parsing and validation.

use libfuzzer_sys::fuzz_target;
use relbridge::cli::parse_run_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_run_config(text);
});
