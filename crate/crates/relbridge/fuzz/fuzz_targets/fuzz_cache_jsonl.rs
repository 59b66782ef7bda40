#![no_main]

//! Prompt-cache recovery: any byte soup parses into a valid prefix plus an
//! optional corruption report, and the prefix length always lands on a
//! line boundary within the input.

use libfuzzer_sys::fuzz_target;
use relbridge::llm::parse_cache_text;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (entries, valid_len, recovery) = parse_cache_text(text);
    assert!(valid_len <= text.len());
    if recovery.is_none() {
        // Clean parse consumed everything.
        assert_eq!(valid_len, text.len());
    }
    let (again, _, _) = parse_cache_text(&text[..valid_len]);
    assert_eq!(again.len(), entries.len());
});
