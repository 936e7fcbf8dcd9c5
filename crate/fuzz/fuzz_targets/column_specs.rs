#![no_main]

use libfuzzer_sys::fuzz_target;
use privscore::dataset::parse_column_specs;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(specs) = parse_column_specs(s) {
            assert!(!specs.is_empty());
        }
    }
});
