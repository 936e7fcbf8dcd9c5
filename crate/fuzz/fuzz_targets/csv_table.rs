#![no_main]

use libfuzzer_sys::fuzz_target;
use privscore::dataset::{ColumnKind, ColumnSpec, DatasetTable, RawTable, Role};

fuzz_target!(|data: &[u8]| {
    let _ = RawTable::from_reader(data);
    let specs = [
        ColumnSpec::new("a", ColumnKind::Binary, Role::Pa),
        ColumnSpec::new("c", ColumnKind::Numeric, Role::Confounder),
        ColumnSpec::new("x", ColumnKind::Numeric, Role::Feature),
        ColumnSpec::new("y", ColumnKind::Binary, Role::Target),
    ];
    if let Ok(t) = DatasetTable::from_csv_reader(data, &specs) {
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let back = DatasetTable::from_csv_reader(out.as_slice(), &specs).unwrap();
        assert_eq!(back.n_rows(), t.n_rows());
    }
});
