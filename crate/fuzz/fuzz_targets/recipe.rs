#![no_main]

use libfuzzer_sys::fuzz_target;
use privscore::dataset::{apply_recipe_counted, RawTable, Recipe};

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = RawTable::from_reader(data) else {
        return;
    };
    for recipe in [Recipe::Hmda, Recipe::Lawschool] {
        if let Ok((table, dropped)) = apply_recipe_counted(&raw, recipe) {
            assert_eq!(table.n_rows() + dropped, raw.rows.len());
        }
    }
});
