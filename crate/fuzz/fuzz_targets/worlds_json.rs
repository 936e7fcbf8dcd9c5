#![no_main]

use libfuzzer_sys::fuzz_target;
use privscore::privilege::WorldModels;
use privscore::psc::{psc, PscOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(w) = WorldModels::from_json(s) else {
        return;
    };
    let row = vec![1.0; w.warper.schema().len()];
    let _ = psc(&w, &row, PscOptions::default());
});
