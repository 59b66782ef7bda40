#![no_main]

//! Binary checkpoint decoder: length fields are attacker-controlled.

use libfuzzer_sys::fuzz_target;
use relbridge::bridge::decode_checkpoint;

fuzz_target!(|data: &[u8]| {
    let _ = decode_checkpoint(data);
});
