//! Encodings for the mortgage (HMDA loan/application register) and law-school
//! admission datasets.
//!
//! Each output column is produced from the first available source column of
//! its rule. The encoded column's own name is always the last source, so a
//! recipe applied to its own output is the identity. Rows with a missing or
//! non-informative value in any required column are dropped and counted.

use serde::{Deserialize, Serialize};

use super::{is_missing, ColumnKind, ColumnSpec, DatasetTable, RawTable, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    Hmda,
    Lawschool,
}

impl std::str::FromStr for Recipe {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hmda" => Ok(Recipe::Hmda),
            "lawschool" | "law-school" | "law_school" => Ok(Recipe::Lawschool),
            other => Err(Error::InvalidArgument(format!("unknown recipe '{other}'"))),
        }
    }
}

enum Mapped {
    Value(f64),
    Reject,
    Invalid,
}

type Mapper = fn(&str) -> Mapped;

struct Rule {
    output: &'static str,
    kind: ColumnKind,
    role: Role,
    sources: &'static [(&'static str, Mapper)],
}

const HMDA: &[Rule] = &[
    Rule {
        output: "sex",
        kind: ColumnKind::Binary,
        role: Role::Confounder,
        sources: &[
            ("derived_sex", map_sex_label),
            ("applicant_sex", map_sex_code),
            ("sex", passthrough_binary),
        ],
    },
    Rule {
        output: "age",
        kind: ColumnKind::Binary,
        role: Role::Confounder,
        sources: &[
            ("applicant_age_above_62", map_yes_no),
            ("applicant_age", map_age),
            ("age", passthrough_binary),
        ],
    },
    Rule {
        output: "race",
        kind: ColumnKind::Binary,
        role: Role::Pa,
        sources: &[
            ("derived_race", map_race_label),
            ("applicant_race_1", map_race_code),
            ("race", passthrough_binary),
        ],
    },
    Rule {
        output: "amount",
        kind: ColumnKind::Numeric,
        role: Role::Feature,
        sources: &[("loan_amount", map_positive), ("amount", map_positive)],
    },
    Rule {
        output: "debt",
        kind: ColumnKind::Binary,
        role: Role::Feature,
        sources: &[
            ("debt_to_income_ratio", map_dti),
            ("debt", passthrough_binary),
        ],
    },
    Rule {
        output: "purpose",
        kind: ColumnKind::Binary,
        role: Role::Feature,
        sources: &[
            ("loan_purpose", map_purpose),
            ("purpose", passthrough_binary),
        ],
    },
    Rule {
        output: "action",
        kind: ColumnKind::Binary,
        role: Role::Target,
        sources: &[("action_taken", map_action), ("action", passthrough_binary)],
    },
];

const LAWSCHOOL: &[Rule] = &[
    Rule {
        output: "race",
        kind: ColumnKind::Binary,
        role: Role::Pa,
        sources: &[("race1", map_black), ("race", map_black_or_binary)],
    },
    Rule {
        output: "ugpa",
        kind: ColumnKind::Numeric,
        role: Role::Feature,
        sources: &[("ugpa", map_number)],
    },
    Rule {
        output: "lsat",
        kind: ColumnKind::Numeric,
        role: Role::Feature,
        sources: &[("lsat", map_number)],
    },
    Rule {
        output: "pass_bar",
        kind: ColumnKind::Binary,
        role: Role::Target,
        sources: &[
            ("pass_bar", passthrough_binary),
            ("pass", passthrough_binary),
        ],
    },
];

fn number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn passthrough_binary(cell: &str) -> Mapped {
    match number(cell) {
        Some(v) if v == 0.0 || v == 1.0 => Mapped::Value(v),
        _ => Mapped::Invalid,
    }
}

fn map_number(cell: &str) -> Mapped {
    number(cell).map_or(Mapped::Invalid, Mapped::Value)
}

fn map_positive(cell: &str) -> Mapped {
    match number(cell) {
        Some(v) if v > 0.0 => Mapped::Value(v),
        Some(_) => Mapped::Reject,
        None => Mapped::Invalid,
    }
}

fn map_sex_label(cell: &str) -> Mapped {
    match cell.to_ascii_lowercase().as_str() {
        "male" => Mapped::Value(1.0),
        "female" => Mapped::Value(0.0),
        "joint" | "sex not available" => Mapped::Reject,
        _ => Mapped::Invalid,
    }
}

fn map_sex_code(cell: &str) -> Mapped {
    match number(cell) {
        Some(1.0) => Mapped::Value(1.0),
        Some(2.0) => Mapped::Value(0.0),
        Some(_) => Mapped::Reject,
        None => Mapped::Invalid,
    }
}

fn map_yes_no(cell: &str) -> Mapped {
    match cell.to_ascii_lowercase().as_str() {
        "yes" | "1" => Mapped::Value(1.0),
        "no" | "0" => Mapped::Value(0.0),
        _ => Mapped::Invalid,
    }
}

/// Numeric ages or HMDA age bands. Bands that straddle 62 are rejected.
fn map_age(cell: &str) -> Mapped {
    if let Some(v) = number(cell) {
        if v == 8888.0 || v == 9999.0 {
            return Mapped::Reject;
        }
        return Mapped::Value(if v > 62.0 { 1.0 } else { 0.0 });
    }
    let s = cell.trim();
    if let Some(rest) = s.strip_prefix('<') {
        return match number(rest) {
            Some(hi) if hi <= 63.0 => Mapped::Value(0.0),
            Some(_) => Mapped::Reject,
            None => Mapped::Invalid,
        };
    }
    if let Some(rest) = s.strip_prefix('>') {
        return match number(rest) {
            Some(lo) if lo >= 62.0 => Mapped::Value(1.0),
            Some(_) => Mapped::Reject,
            None => Mapped::Invalid,
        };
    }
    if let Some((lo, hi)) = s.split_once('-') {
        return match (number(lo), number(hi)) {
            (Some(_), Some(hi)) if hi <= 62.0 => Mapped::Value(0.0),
            (Some(lo), Some(_)) if lo > 62.0 => Mapped::Value(1.0),
            (Some(_), Some(_)) => Mapped::Reject,
            _ => Mapped::Invalid,
        };
    }
    Mapped::Invalid
}

fn map_race_label(cell: &str) -> Mapped {
    match cell.to_ascii_lowercase().as_str() {
        "white" => Mapped::Value(1.0),
        "race not available" => Mapped::Reject,
        _ => Mapped::Value(0.0),
    }
}

fn map_race_code(cell: &str) -> Mapped {
    match number(cell) {
        Some(5.0) => Mapped::Value(1.0),
        Some(v) if v == 6.0 || v == 7.0 => Mapped::Reject,
        Some(_) => Mapped::Value(0.0),
        None => Mapped::Invalid,
    }
}

fn pct(s: &str) -> Option<f64> {
    number(s.trim().trim_end_matches('%'))
}

/// 1 iff the debt-to-income ratio is below 36%. Handles HMDA's banded
/// values ("<20%", "30%-<36%", "50%-60%", ">60%") and exact percentages.
fn map_dti(cell: &str) -> Mapped {
    let s = cell.trim();
    if s.eq_ignore_ascii_case("exempt") {
        return Mapped::Reject;
    }
    let below = |b: bool| Mapped::Value(if b { 1.0 } else { 0.0 });
    if let Some(rest) = s.strip_prefix('<') {
        return match pct(rest) {
            Some(hi) if hi <= 36.0 => below(true),
            Some(_) => Mapped::Reject,
            None => Mapped::Invalid,
        };
    }
    if let Some(rest) = s.strip_prefix('>') {
        return match pct(rest) {
            Some(lo) if lo >= 36.0 => below(false),
            Some(_) => Mapped::Reject,
            None => Mapped::Invalid,
        };
    }
    if let Some((lo, hi)) = s.split_once('-') {
        let exclusive = hi.trim_start().starts_with('<');
        return match (pct(lo), pct(hi.trim_start().trim_start_matches('<'))) {
            (Some(_), Some(hi)) if hi < 36.0 || (exclusive && hi <= 36.0) => below(true),
            (Some(lo), Some(_)) if lo >= 36.0 => below(false),
            (Some(_), Some(_)) => Mapped::Reject,
            _ => Mapped::Invalid,
        };
    }
    match pct(s) {
        Some(v) => below(v < 36.0),
        None => Mapped::Invalid,
    }
}

fn map_purpose(cell: &str) -> Mapped {
    if let Some(v) = number(cell) {
        return Mapped::Value(if v == 1.0 { 1.0 } else { 0.0 });
    }
    let s = cell.to_ascii_lowercase();
    if s == "home purchase" {
        Mapped::Value(1.0)
    } else {
        Mapped::Value(0.0)
    }
}

fn map_action(cell: &str) -> Mapped {
    if let Some(v) = number(cell) {
        return if (1.0..=8.0).contains(&v) && v.fract() == 0.0 {
            Mapped::Value(if v == 1.0 { 1.0 } else { 0.0 })
        } else {
            Mapped::Invalid
        };
    }
    let s = cell.to_ascii_lowercase();
    if s == "originated" || s == "loan originated" {
        Mapped::Value(1.0)
    } else {
        Mapped::Invalid
    }
}

fn map_black(cell: &str) -> Mapped {
    let s = cell.to_ascii_lowercase();
    if s.is_empty() {
        Mapped::Reject
    } else if s == "black" || s.starts_with("black ") {
        Mapped::Value(0.0)
    } else {
        Mapped::Value(1.0)
    }
}

fn map_black_or_binary(cell: &str) -> Mapped {
    match number(cell) {
        Some(v) if v == 0.0 || v == 1.0 => Mapped::Value(v),
        Some(_) => Mapped::Invalid,
        None => map_black(cell),
    }
}

/// Encodes `raw` with the given recipe, returning the table and the number
/// of rows dropped for missing or non-informative values.
pub fn apply_recipe_counted(raw: &RawTable, recipe: Recipe) -> Result<(DatasetTable, usize)> {
    let rules = match recipe {
        Recipe::Hmda => HMDA,
        Recipe::Lawschool => LAWSCHOOL,
    };
    let mut resolved = Vec::with_capacity(rules.len());
    for rule in rules {
        let found = rule
            .sources
            .iter()
            .find_map(|(name, mapper)| raw.column_index(name).map(|i| (i, *name, *mapper)));
        match found {
            Some(f) => resolved.push(f),
            None => {
                let tried: Vec<&str> = rule.sources.iter().map(|(n, _)| *n).collect();
                return Err(Error::Schema(format!(
                    "recipe {recipe:?} needs a source column for '{}' (one of: {})",
                    rule.output,
                    tried.join(", ")
                )));
            }
        }
    }

    let mut data = vec![Vec::with_capacity(raw.rows.len()); rules.len()];
    let mut rejected = 0usize;
    'rows: for (r, rec) in raw.rows.iter().enumerate() {
        let mut values = Vec::with_capacity(rules.len());
        for &(col, name, mapper) in &resolved {
            let cell = rec[col].trim();
            if is_missing(cell) {
                rejected += 1;
                continue 'rows;
            }
            match mapper(cell) {
                Mapped::Value(v) => values.push(v),
                Mapped::Reject => {
                    rejected += 1;
                    continue 'rows;
                }
                Mapped::Invalid => {
                    return Err(Error::Parse {
                        row: r + 1,
                        column: name.to_owned(),
                        value: cell.to_owned(),
                    })
                }
            }
        }
        for (c, v) in data.iter_mut().zip(values) {
            c.push(v);
        }
    }
    if rejected > 0 {
        log::warn!(
            "{recipe:?} recipe dropped {rejected} row(s) with missing or non-informative values"
        );
    }
    let columns = rules
        .iter()
        .map(|r| ColumnSpec::new(r.output, r.kind, r.role))
        .collect();
    let table = DatasetTable::from_columns_strict(columns, data, 1.0)?;
    Ok((table, rejected))
}

pub fn apply_recipe(raw: &RawTable, recipe: Recipe) -> Result<DatasetTable> {
    apply_recipe_counted(raw, recipe).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(header: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    const HMDA_HEADER: &[&str] = &[
        "action_taken",
        "derived_race",
        "derived_sex",
        "applicant_age",
        "loan_purpose",
        "loan_amount",
        "debt_to_income_ratio",
    ];

    #[test]
    fn hmda_row_encoding() {
        let t = apply_recipe(
            &raw(
                HMDA_HEADER,
                &[&["1", "White", "Female", "45", "1", "85000", "30%"]],
            ),
            Recipe::Hmda,
        )
        .unwrap();
        let get = |n: &str| t.column_by_name(n).unwrap()[0];
        assert_eq!(get("action"), 1.0);
        assert_eq!(get("race"), 1.0);
        assert_eq!(get("debt"), 1.0);
        assert_eq!(get("purpose"), 1.0);
        assert_eq!(get("age"), 0.0);
        assert_eq!(get("sex"), 0.0);
        assert_eq!(get("amount"), 85000.0);
        assert_eq!(t.columns()[t.pa_index()].name, "race");
        assert_eq!(t.columns()[t.target_index()].name, "action");
    }

    #[test]
    fn hmda_codes_and_bands() {
        let rows: &[&[&str]] = &[
            &[
                "3",
                "Black or African American",
                "Male",
                ">74",
                "31",
                "50000",
                "50%-60%",
            ],
            &["1", "Asian", "Male", "65-74", "2", "120000", "30%-<36%"],
            &["6", "White", "Female", "25-34", "1", "90000", "36"],
            // dropped: dti not available, joint sex, ambiguous age band
            &["1", "White", "Female", "45", "1", "85000", "NA"],
            &["1", "White", "Joint", "45", "1", "85000", "20%"],
            &["1", "White", "Male", "55-64", "1", "85000", "20%"],
            &["1", "Race Not Available", "Male", "45", "1", "85000", "20%"],
        ];
        let (t, dropped) = apply_recipe_counted(&raw(HMDA_HEADER, rows), Recipe::Hmda).unwrap();
        assert_eq!(dropped, 4);
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.column_by_name("action").unwrap(), &[0.0, 1.0, 0.0]);
        assert_eq!(t.column_by_name("race").unwrap(), &[0.0, 0.0, 1.0]);
        assert_eq!(t.column_by_name("age").unwrap(), &[1.0, 1.0, 0.0]);
        assert_eq!(t.column_by_name("purpose").unwrap(), &[0.0, 0.0, 1.0]);
        assert_eq!(t.column_by_name("debt").unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn invalid_cell_is_an_error() {
        let err = apply_recipe(
            &raw(
                HMDA_HEADER,
                &[&["x", "White", "Male", "45", "1", "1", "20%"]],
            ),
            Recipe::Hmda,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, ref column, .. } if column == "action_taken"));
    }

    #[test]
    fn missing_source_column() {
        let err = apply_recipe(
            &raw(&["race1", "ugpa"], &[&["black", "2.0"]]),
            Recipe::Lawschool,
        )
        .unwrap_err();
        assert!(err.to_string().contains("lsat"));
    }

    #[test]
    fn lawschool_row() {
        let t = apply_recipe(
            &raw(
                &["race", "ugpa", "lsat", "pass_bar"],
                &[&["Black", "2.0", "21.0", "0"]],
            ),
            Recipe::Lawschool,
        )
        .unwrap();
        assert_eq!(t.row(0), vec![0.0, 2.0, 21.0, 0.0]);
        let t = apply_recipe(
            &raw(
                &["race1", "ugpa", "lsat", "pass_bar"],
                &[&["hisp", "3.1", "40", "1"]],
            ),
            Recipe::Lawschool,
        )
        .unwrap();
        assert_eq!(t.row(0), vec![1.0, 3.1, 40.0, 1.0]);
    }

    #[test]
    fn recipes_are_idempotent() {
        let r = raw(
            HMDA_HEADER,
            &[
                &["1", "White", "Female", "45", "1", "85000", "30%"],
                &["2", "Asian", "Male", "70", "32", "1.5e5", ">60%"],
            ],
        );
        let once = apply_recipe(&r, Recipe::Hmda).unwrap();
        let twice = apply_recipe(&once.to_raw(), Recipe::Hmda).unwrap();
        assert_eq!(once, twice);

        let r = raw(
            &["race", "ugpa", "lsat", "pass_bar"],
            &[&["Black", "2.0", "21.0", "0"]],
        );
        let once = apply_recipe(&r, Recipe::Lawschool).unwrap();
        assert_eq!(
            once,
            apply_recipe(&once.to_raw(), Recipe::Lawschool).unwrap()
        );
    }

    proptest! {
        #[test]
        fn hmda_output_satisfies_schema(
            rows in prop::collection::vec((
                1u8..9,
                prop::sample::select(vec!["White", "Asian", "Black or African American",
                    "Race Not Available", "2 or more minority races"]),
                prop::sample::select(vec!["Male", "Female", "Joint", "Sex Not Available"]),
                prop::sample::select(vec!["<25", "25-34", "35-44", "55-64", "65-74", ">74",
                    "8888", "30", "70"]),
                prop::sample::select(vec!["1", "2", "31", "32", "4", "5"]),
                -10.0f64..1e7,
                prop::sample::select(vec!["<20%", "20%-<30%", "30%-<36%", "36", "41",
                    "50%-60%", ">60%", "Exempt", "NA", "12.5"]),
            ), 1..40)
        ) {
            let cells: Vec<Vec<String>> = rows.iter().map(|r| vec![
                r.0.to_string(), r.1.to_string(), r.2.to_string(), r.3.to_string(),
                r.4.to_string(), r.5.to_string(), r.6.to_string(),
            ]).collect();
            let raw = RawTable { header: HMDA_HEADER.iter().map(|s| s.to_string()).collect(), rows: cells };
            match apply_recipe_counted(&raw, Recipe::Hmda) {
                Ok((t, dropped)) => {
                    prop_assert_eq!(t.n_rows() + dropped, rows.len());
                    prop_assert!(t.check_binary().is_ok());
                    prop_assert!(t.column_by_name("amount").unwrap().iter().all(|&v| v > 0.0));
                }
                Err(Error::Empty(_)) => {}
                Err(e) => prop_assert!(false, "unexpected error {}", e),
            }
        }
    }
}
