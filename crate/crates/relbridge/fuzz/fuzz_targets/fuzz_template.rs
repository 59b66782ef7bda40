#![no_main]

//! Prompt-template rendering: arbitrary templates against fixed fields.

use libfuzzer_sys::fuzz_target;
use relbridge::llm::render_template;
use std::collections::BTreeMap;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut fields = BTreeMap::new();
    fields.insert("name".to_string(), "ada".to_string());
    fields.insert("tags".to_string(), "a,b".to_string());
    if let Ok(out) = render_template(text, &fields) {
        assert!(!out.contains("{name}"), "placeholders must be substituted");
    }
});
