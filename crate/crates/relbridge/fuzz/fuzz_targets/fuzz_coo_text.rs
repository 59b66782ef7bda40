#![no_main]

//! Coordinate-list text format parser.

use libfuzzer_sys::fuzz_target;
use relbridge::graph::parse_coo;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(matrix) = parse_coo(text) {
        // A successful parse must be in canonical form and re-exportable.
        let again = parse_coo(&matrix.to_coo_string()).expect("round trip");
        assert_eq!(again, matrix);
    }
});
