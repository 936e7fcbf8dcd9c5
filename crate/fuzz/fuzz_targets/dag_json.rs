#![no_main]

use libfuzzer_sys::fuzz_target;
use privscore::dag::{validate, CausalDag};
use privscore::dataset::{ColumnKind, ColumnSpec, DatasetTable, Role};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(dag) = CausalDag::from_json(s) else {
        return;
    };
    let specs = vec![
        ColumnSpec::new("A", ColumnKind::Binary, Role::Pa),
        ColumnSpec::new("C", ColumnKind::Numeric, Role::Confounder),
        ColumnSpec::new("X1", ColumnKind::Numeric, Role::Feature),
        ColumnSpec::new("X2", ColumnKind::Binary, Role::Feature),
        ColumnSpec::new("Y", ColumnKind::Binary, Role::Target),
    ];
    let rows = vec![
        vec![0.0, 30.0, 2.0, 1.0, 0.0],
        vec![1.0, 40.0, 3.0, 0.0, 1.0],
    ];
    let table = DatasetTable::from_rows(specs, &rows, 1.0).unwrap();
    if let Ok(v) = validate(&dag, &table) {
        assert_eq!(v.k(), v.privilege_arrows().k());
        for f in v.warp_order() {
            assert!(v.arrow_of(f).is_some());
        }
    }
});
