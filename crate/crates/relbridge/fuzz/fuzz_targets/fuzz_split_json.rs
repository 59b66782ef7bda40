#![no_main]

//! split.json parsing plus structural validation against a fixed table size.

use libfuzzer_sys::fuzz_target;
use relbridge::datasets::{parse_split_file, Split};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = parse_split_file(text) {
        let split = Split { train: file.train, val: file.val, test: file.test };
        let labels: Vec<Option<usize>> = (0..100).map(|_| Some(0)).collect();
        let _ = split.validate(100, &labels);
    }
});
