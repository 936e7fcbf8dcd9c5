#![no_main]

use libfuzzer_sys::fuzz_target;
use privscore::models::FittedPredictor;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(model) = FittedPredictor::from_json(s) else {
        return;
    };
    let names = model.feature_names().to_vec();
    let Ok(model) = model.bind(&names) else {
        return;
    };
    let p = model.predict(&vec![0.5; names.len()]);
    assert!(p.is_nan() || (0.0..=1.0).contains(&p));
});
