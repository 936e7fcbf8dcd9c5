//! Residual-based warping into the world where the PA takes its advantaged
//! level.
//!
//! Each PA-descendant feature gets a GLM on its DAG parents. Binary features
//! keep their residual on the mean scale: `x + mu(warped parents) - mu(real
//! parents)`. Positive numeric features keep their quantile under the fitted
//! gamma law; with a common shape the quantile map reduces to rescaling by the
//! ratio of the two means.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dag::ValidatedDag;
use crate::dataset::{ColumnKind, ColumnSpec, DatasetTable, Role};
use crate::error::{Error, Result};
use crate::models::glm::{fit_glm, FittedGlm, GlmFamily};

/// Players are privilege arrows indexed `0..k`; a coalition is a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coalition(pub u32);

impl Coalition {
    pub const MAX_PLAYERS: usize = 32;

    pub fn empty() -> Self {
        Coalition(0)
    }

    pub fn full(k: usize) -> Self {
        assert!(k <= Self::MAX_PLAYERS);
        if k == 32 {
            Coalition(u32::MAX)
        } else {
            Coalition((1u32 << k) - 1)
        }
    }

    pub fn from_players(players: &[usize]) -> Self {
        Coalition(players.iter().fold(0, |m, &j| m | (1 << j)))
    }

    pub fn contains(self, j: usize) -> bool {
        self.0 & (1 << j) != 0
    }

    pub fn with(self, j: usize) -> Self {
        Coalition(self.0 | (1 << j))
    }

    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWarp {
    pub feature: String,
    pub column: usize,
    pub kind: ColumnKind,
    /// Privilege arrow this feature descends from.
    pub arrow: usize,
    pub model: FittedGlm,
    pub parent_columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warper {
    schema: Vec<String>,
    pa_column: usize,
    advantaged_level: f64,
    k: usize,
    /// In warp order: parents precede children.
    features: Vec<FeatureWarp>,
    target_column: usize,
    target_model: FittedGlm,
    target_parent_columns: Vec<usize>,
}

fn parent_columns(dag: &ValidatedDag, parents: &[String]) -> Vec<usize> {
    parents
        .iter()
        .map(|p| dag.column_of(p).expect("validated node"))
        .collect()
}

pub fn fit_warper(train: &DatasetTable, dag: &ValidatedDag) -> Result<Warper> {
    let mut features = Vec::with_capacity(dag.warp_order().len());
    for feature in dag.warp_order() {
        let column = train.require_column(feature)?;
        let kind = train.columns()[column].kind;
        let family = match kind {
            ColumnKind::Binary => GlmFamily::BinomialLogit,
            ColumnKind::Numeric => GlmFamily::GammaLog,
        };
        let parents = dag.parents(feature);
        let model = fit_glm(train, feature, &parents, family)?;
        features.push(FeatureWarp {
            feature: feature.clone(),
            column,
            kind,
            arrow: dag
                .arrow_of(feature)
                .expect("warp-order feature has an arrow"),
            parent_columns: parent_columns(dag, &parents),
            model,
        });
    }
    let target = dag.target();
    let target_parents = dag.parents(target);
    let target_model = fit_glm(train, target, &target_parents, GlmFamily::BinomialLogit)?;
    Ok(Warper {
        schema: train.columns().iter().map(|c| c.name.clone()).collect(),
        pa_column: dag.column_of(dag.pa()).expect("validated PA"),
        advantaged_level: dag.advantaged_level(),
        k: dag.k(),
        features,
        target_column: train.require_column(target)?,
        target_parent_columns: parent_columns(dag, &target_parents),
        target_model,
    })
}

impl Warper {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn advantaged_level(&self) -> f64 {
        self.advantaged_level
    }

    pub fn feature_models(&self) -> &[FeatureWarp] {
        &self.features
    }

    pub fn target_model(&self) -> &FittedGlm {
        &self.target_model
    }

    pub fn feature_model(&self, feature: &str) -> Option<&FittedGlm> {
        self.features
            .iter()
            .find(|f| f.feature == feature)
            .map(|f| &f.model)
    }

    fn means(
        &self,
        glm: &FittedGlm,
        parents: &[usize],
        real: &[f64],
        warped: &[f64],
    ) -> (f64, f64) {
        let mu_real = glm.mean_of(|j| real[parents[j]]);
        let pa = self.pa_column;
        let adv = self.advantaged_level;
        let mu_warped = glm.mean_of(|j| {
            let c = parents[j];
            if c == pa {
                adv
            } else {
                warped[c]
            }
        });
        (mu_real, mu_warped)
    }

    /// Record with the arrows in `s` removed. `row` is laid out as the
    /// training table.
    pub fn warp_row(&self, row: &[f64], s: Coalition) -> Vec<f64> {
        let mut out = row.to_vec();
        self.warp_into(row, s, &mut out);
        out
    }

    /// Same as [`Warper::warp_row`], writing into a caller buffer that must
    /// already hold a copy of `row`.
    pub fn warp_into(&self, row: &[f64], s: Coalition, out: &mut [f64]) {
        assert_eq!(
            row.len(),
            self.schema.len(),
            "record does not match warper schema"
        );
        if s.0 == 0 {
            return;
        }
        for f in &self.features {
            if !s.contains(f.arrow) {
                continue;
            }
            let (mu_r, mu_w) = self.means(&f.model, &f.parent_columns, row, out);
            let x = row[f.column];
            out[f.column] = match f.kind {
                ColumnKind::Binary => x + (mu_w - mu_r),
                ColumnKind::Numeric => quantile_warp(x, mu_r, mu_w),
            };
        }
    }

    /// Soft target of a training row after removing every arrow; `warped`
    /// is the fully warped record.
    pub fn warp_target(&self, row: &[f64], warped: &[f64]) -> f64 {
        let (mu_r, mu_w) = self.means(&self.target_model, &self.target_parent_columns, row, warped);
        (row[self.target_column] + (mu_w - mu_r)).clamp(0.0, 1.0)
    }

    /// Every row warped with all arrows removed, target included.
    pub fn warp_training_set(&self, train: &DatasetTable) -> Result<DatasetTable> {
        self.check_schema(train)?;
        let full = Coalition::full(self.k);
        let n = train.n_rows();
        let p = train.n_cols();
        let mut data = vec![Vec::with_capacity(n); p];
        let mut buf = vec![0.0; p];
        for i in 0..n {
            let row = train.row(i);
            buf.copy_from_slice(&row);
            self.warp_into(&row, full, &mut buf);
            let y = self.warp_target(&row, &buf);
            buf[self.target_column] = y;
            for (c, v) in data.iter_mut().zip(&buf) {
                c.push(*v);
            }
        }
        DatasetTable::from_columns(train.columns().to_vec(), data, train.advantaged_level())
    }

    /// Features warped for coalition `s`; the target column is left as is.
    pub fn warp_table(&self, table: &DatasetTable, s: Coalition) -> Result<DatasetTable> {
        self.check_schema(table)?;
        let rows: Vec<Vec<f64>> = table.rows().map(|r| self.warp_row(&r, s)).collect();
        DatasetTable::from_rows(table.columns().to_vec(), &rows, table.advantaged_level())
    }

    pub fn check_schema(&self, table: &DatasetTable) -> Result<()> {
        let names: Vec<&str> = table.columns().iter().map(|c| c.name.as_str()).collect();
        if names != self.schema.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Schema(format!(
                "table columns [{}] differ from warper columns [{}]",
                names.join(", "),
                self.schema.join(", ")
            )));
        }
        Ok(())
    }

    /// Names of the columns that warping can change (features and target).
    pub fn warped_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.features.iter().map(|f| f.column).collect();
        cols.sort_unstable();
        cols.push(self.target_column);
        cols
    }
}

/// Gamma quantile map between two means sharing one shape parameter.
pub fn quantile_warp(x: f64, mu_real: f64, mu_warped: f64) -> f64 {
    if mu_real == mu_warped {
        x
    } else {
        x * (mu_warped / mu_real)
    }
}

/// Real table plus one `<name>_w` column per warped feature and the target.
pub fn warped_export(
    real: &DatasetTable,
    warped: &DatasetTable,
    warper: &Warper,
) -> Result<DatasetTable> {
    warper.check_schema(real)?;
    warper.check_schema(warped)?;
    let mut specs: Vec<ColumnSpec> = real.columns().to_vec();
    let mut data: Vec<Vec<f64>> = (0..real.n_cols())
        .map(|c| real.column(c).to_vec())
        .collect();
    for c in warper.warped_columns() {
        let spec = &real.columns()[c];
        specs.push(ColumnSpec::new(
            format!("{}_w", spec.name),
            ColumnKind::Numeric,
            Role::Ignore,
        ));
        data.push(warped.column(c).to_vec());
    }
    DatasetTable::from_columns(specs, data, real.advantaged_level())
}

pub fn write_warped_csv<W: Write>(
    real: &DatasetTable,
    warped: &DatasetTable,
    warper: &Warper,
    writer: W,
) -> Result<()> {
    warped_export(real, warped, warper)?.write_csv(writer)
}

pub fn save_warped_csv(
    real: &DatasetTable,
    warped: &DatasetTable,
    warper: &Warper,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_warped_csv(real, warped, warper, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{validate, CausalDag};
    use crate::scm::{self, Scenario, ScmSpec};
    use crate::stats::{gamma_cdf, gamma_quantile};

    fn sc_train(n: usize, seed: u64) -> (DatasetTable, ValidatedDag) {
        let samples = scm::sample_paired(&ScmSpec {
            scenario: Scenario::Sc,
            n,
            seed,
        });
        let t = scm::to_table(&samples).unwrap();
        let d = validate(&scm::analysis_dag(), &t).unwrap();
        (t, d)
    }

    #[test]
    fn coalition_bits() {
        let s = Coalition::from_players(&[0, 2]);
        assert!(s.contains(0) && !s.contains(1) && s.contains(2));
        assert_eq!(s.size(), 2);
        assert_eq!(Coalition::full(3), Coalition(7));
        assert!(s.is_subset_of(Coalition::full(3)));
        assert_eq!(Coalition::empty().with(1), Coalition(2));
    }

    #[test]
    fn quantile_map_matches_cdf_route() {
        let shape = 1.0 / 0.74;
        for (x, mr, mw) in [
            (2500.0, 3000.0, 3600.0),
            (10.0, 50.0, 20.0),
            (1e5, 4e4, 4.1e4),
        ] {
            let u = gamma_cdf(shape, x / (mr / shape));
            let via_cdf = gamma_quantile(shape, u) * (mw / shape);
            let closed = quantile_warp(x, mr, mw);
            assert!(
                (via_cdf - closed).abs() < 1e-7 * closed,
                "{via_cdf} vs {closed}"
            );
        }
    }

    #[test]
    fn sc_warper_signs_and_identities() {
        let (t, d) = sc_train(4000, 21);
        let w = fit_warper(&t, &d).unwrap();
        assert!(w.feature_model("X2").unwrap().coefficient("A").unwrap() < 0.0);
        assert!(w.feature_model("X1").unwrap().coefficient("A").unwrap() > 0.0);
        for i in 0..t.n_rows() {
            let row = t.row(i);
            assert_eq!(w.warp_row(&row, Coalition::empty()), row);
            if row[0] == 1.0 {
                assert_eq!(w.warp_row(&row, Coalition::full(2)), row);
            } else {
                // only the child of the removed arrow moves
                let s0 = w.warp_row(&row, Coalition::from_players(&[0]));
                assert_ne!(s0[2], row[2]);
                assert_eq!(s0[3], row[3]);
                let s1 = w.warp_row(&row, Coalition::from_players(&[1]));
                assert_eq!(s1[2], row[2]);
                assert_ne!(s1[3], row[3]);
            }
        }
        let warped = w.warp_training_set(&t).unwrap();
        let (mut y, mut yw, mut m) = (0.0, 0.0, 0);
        for i in 0..t.n_rows() {
            if t.value(i, 0) == 0.0 {
                y += t.value(i, 4);
                yw += warped.value(i, 4);
                m += 1;
            } else {
                assert_eq!(t.row(i), warped.row(i));
            }
        }
        assert!(m > 0 && yw >= y);
    }

    #[test]
    fn k_zero_has_only_target_model() {
        let (t, _) = sc_train(500, 3);
        let dag = CausalDag::new(
            &["A", "C", "X1", "X2", "Y"],
            &[("A", "Y"), ("C", "Y"), ("X1", "Y"), ("X2", "Y")],
            "A",
            "Y",
        );
        let d = validate(&dag, &t).unwrap();
        let w = fit_warper(&t, &d).unwrap();
        assert!(w.feature_models().is_empty());
        assert_eq!(w.target_model().parents.len(), 4);
    }

    #[test]
    fn export_has_suffixed_columns() {
        let (t, d) = sc_train(300, 8);
        let w = fit_warper(&t, &d).unwrap();
        let warped = w.warp_training_set(&t).unwrap();
        let e = warped_export(&t, &warped, &w).unwrap();
        let names: Vec<&str> = e.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["A", "C", "X1", "X2", "Y", "X1_w", "X2_w", "Y_w"]);
    }
}
