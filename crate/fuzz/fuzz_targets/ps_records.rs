#![no_main]

use libfuzzer_sys::fuzz_target;
use privscore::report::{read_records, render_svg, write_records};

fuzz_target!(|data: &[u8]| {
    let Ok(records) = read_records(data) else {
        return;
    };
    for r in &records {
        let _ = render_svg(r);
    }
    let mut out = Vec::new();
    if write_records(&records, &mut out).is_ok() {
        let back = read_records(out.as_slice()).unwrap();
        assert_eq!(back.len(), records.len());
    }
});
