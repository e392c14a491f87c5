#![no_main]

use libfuzzer_sys::fuzz_target;
use semcom::results::{parse_csv, to_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = parse_csv(text) {
            let again = parse_csv(&to_csv(&file.rows, file.complete)).expect("written results parse");
            assert_eq!(again.complete, file.complete);
            assert_eq!(again.rows.len(), file.rows.len());
        }
    }
});
