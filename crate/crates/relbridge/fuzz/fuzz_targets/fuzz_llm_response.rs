#![no_main]

//! Chat-response label/confidence grammar.

use libfuzzer_sys::fuzz_target;
use relbridge::llm::parse_annotation;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let classes: Vec<String> = ["rock", "jazz", "folk"].iter().map(|s| s.to_string()).collect();
    let (label, confidence) = parse_annotation(text, &classes);
    if let Some(label) = label {
        assert!(classes.contains(&label));
    }
    if let Some(c) = confidence {
        assert!((0.0..=1.0).contains(&c));
    }
});
