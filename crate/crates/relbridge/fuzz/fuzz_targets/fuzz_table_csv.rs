#![no_main]

//! CSV table loading must reject malformed files with errors, never panics.

use libfuzzer_sys::fuzz_target;
use relbridge::table::{load_table_from_reader, parse_table_schema};

fuzz_target!(|data: &[u8]| {
    let schema = parse_table_schema(
        r#"{"table": "users", "primary_key": "id",
            "columns": {"id": "identifier", "gender": "categorical",
                        "age": "numerical", "joined": "timestamp", "bio": "text"}}"#,
    )
    .expect("static schema parses");
    let _ = load_table_from_reader(data, &schema, "fuzz");
});
