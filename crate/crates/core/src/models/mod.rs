//! Classifiers for the real- and warped-world predictors, GLMs for warping,
//! and random-search tuning.

pub mod forest;
pub mod glm;
mod irls;
pub mod logistic;
pub mod tuning;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{ForestParams, RandomForest};
pub use glm::{fit_glm, FittedGlm, GlmFamily};
pub use logistic::LogisticModel;
pub use tuning::{tune_forest, TuningBudget, TuningResult};

use crate::dataset::DatasetTable;
use crate::error::{Error, Result};

pub(crate) use irls::check_rank;

/// Output clamp keeping log-losses finite.
pub const PROBABILITY_EPS: f64 = 1e-12;

pub const MODEL_DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    RandomForest,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "logistic" => Ok(ModelKind::Logistic),
            "random_forest" | "rf" | "forest" => Ok(ModelKind::RandomForest),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind `{other}` (expected logistic or random_forest)"
            ))),
        }
    }
}

/// Fitted state; `Constant` is what a degenerate target produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PredictorState {
    Constant { probability: f64 },
    Logistic(LogisticModel),
    RandomForest(RandomForest),
}

/// Hyperparameters needed to refit a predictor of the same shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Hyperparameters {
    Logistic,
    RandomForest(ForestParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPredictor {
    kind: ModelKind,
    feature_names: Vec<String>,
    /// Where each feature sits in the records passed to `predict`.
    feature_columns: Vec<usize>,
    state: PredictorState,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    kind: ModelKind,
    feature_names: Vec<String>,
    state: PredictorState,
}

impl FittedPredictor {
    /// A predictor reading features in `feature_names` order.
    pub fn new(kind: ModelKind, feature_names: Vec<String>, state: PredictorState) -> Self {
        let feature_columns = (0..feature_names.len()).collect();
        FittedPredictor {
            kind,
            feature_names,
            feature_columns,
            state,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn state(&self) -> &PredictorState {
        &self.state
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        match &self.state {
            PredictorState::RandomForest(f) => Hyperparameters::RandomForest(f.params),
            _ => match self.kind {
                ModelKind::Logistic => Hyperparameters::Logistic,
                ModelKind::RandomForest => Hyperparameters::RandomForest(ForestParams::default()),
            },
        }
    }

    /// Re-targets the predictor at records laid out as `schema`.
    pub fn bind(mut self, schema: &[String]) -> Result<Self> {
        let mut cols = Vec::with_capacity(self.feature_names.len());
        for f in &self.feature_names {
            let idx = schema
                .iter()
                .position(|s| s == f)
                .ok_or_else(|| Error::MissingFeature(f.clone()))?;
            cols.push(idx);
        }
        self.feature_columns = cols;
        Ok(self)
    }

    /// Probability for a record laid out like the table the model was fitted
    /// on (or bound to). Clamped to `[eps, 1 - eps]`.
    pub fn predict(&self, record: &[f64]) -> f64 {
        let cols = &self.feature_columns;
        let x = |j: usize| record[cols[j]];
        let p = match &self.state {
            PredictorState::Constant { probability } => *probability,
            PredictorState::Logistic(m) => m.probability_of(x),
            PredictorState::RandomForest(f) => f.probability_of(x),
        };
        p.clamp(PROBABILITY_EPS, 1.0 - PROBABILITY_EPS)
    }

    /// Probability for a record given by column names.
    pub fn predict_named(&self, names: &[String], values: &[f64]) -> Result<f64> {
        let mut record = vec![0.0; self.feature_names.len()];
        for (j, f) in self.feature_names.iter().enumerate() {
            let pos = names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| Error::MissingFeature(f.clone()))?;
            record[j] = values[pos];
        }
        let fitted = FittedPredictor {
            kind: self.kind,
            feature_names: Vec::new(),
            feature_columns: (0..record.len()).collect(),
            state: self.state.clone(),
        };
        Ok(fitted.predict(&record))
    }

    /// Whether the fitted state can depend on the named feature.
    pub fn reads_feature(&self, name: &str) -> bool {
        let Some(j) = self.feature_names.iter().position(|f| f == name) else {
            return false;
        };
        match &self.state {
            PredictorState::Constant { .. } => false,
            PredictorState::Logistic(m) => m.coefficients[j + 1] != 0.0,
            PredictorState::RandomForest(f) => f.trees.iter().any(|t| t.reads_feature(j)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            version: MODEL_DOCUMENT_VERSION,
            kind: self.kind,
            feature_names: self.feature_names.clone(),
            state: self.state.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(json)?;
        if doc.version != MODEL_DOCUMENT_VERSION {
            return Err(Error::ModelVersion(doc.version));
        }
        Ok(FittedPredictor::new(doc.kind, doc.feature_names, doc.state))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Soft-label training set in canonical row order.
pub(crate) struct TrainingSet {
    pub columns: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl TrainingSet {
    pub fn new(columns: Vec<Vec<f64>>, y: Vec<f64>, w: Vec<f64>) -> Self {
        let n = y.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            for col in &columns {
                let o = col[a].total_cmp(&col[b]);
                if o.is_ne() {
                    return o;
                }
            }
            y[a].total_cmp(&y[b]).then(w[a].total_cmp(&w[b]))
        });
        let gather = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        TrainingSet {
            columns: columns.iter().map(|c| gather(c)).collect(),
            y: gather(&y),
            w: gather(&w),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn subset(&self, idx: &[usize]) -> TrainingSet {
        TrainingSet {
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            w: idx.iter().map(|&i| self.w[i]).collect(),
        }
    }

    fn base_rate(&self) -> f64 {
        let ws: f64 = self.w.iter().sum();
        self.y.iter().zip(&self.w).map(|(y, w)| y * w).sum::<f64>() / ws
    }

    fn is_degenerate(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0) || self.y.iter().all(|&v| v == 1.0)
    }
}

pub(crate) fn fit_state(
    data: &TrainingSet,
    names: &[String],
    hyper: Hyperparameters,
    seed: u64,
) -> Result<PredictorState> {
    if data.is_degenerate() {
        return Ok(PredictorState::Constant {
            probability: data.base_rate(),
        });
    }
    match hyper {
        Hyperparameters::Logistic => {
            let cols: Vec<&[f64]> = data.columns.iter().map(Vec::as_slice).collect();
            let m = logistic::fit_logistic(&cols, names, &data.y, Some(&data.w))?;
            Ok(PredictorState::Logistic(m))
        }
        Hyperparameters::RandomForest(params) => {
            let w1: Vec<f64> = data.y.iter().zip(&data.w).map(|(y, w)| y * w).collect();
            let w0: Vec<f64> = data
                .y
                .iter()
                .zip(&data.w)
                .map(|(y, w)| (1.0 - y) * w)
                .collect();
            let fd = forest::ForestData {
                columns: &data.columns,
                w1: &w1,
                w0: &w0,
            };
            Ok(PredictorState::RandomForest(forest::fit_forest(
                &fd, params, seed,
            )))
        }
    }
}

fn training_set(
    table: &DatasetTable,
    target: &str,
    features: &[String],
    weights: Option<&[f64]>,
) -> Result<(TrainingSet, Vec<usize>)> {
    let y = table.column_by_name(target)?.to_vec();
    if let Some(v) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "target `{target}` holds {v}, labels must lie in [0,1]"
        )));
    }
    let mut cols = Vec::with_capacity(features.len());
    let mut idx = Vec::with_capacity(features.len());
    for f in features {
        let i = table
            .column_index(f)
            .ok_or_else(|| Error::MissingFeature(f.clone()))?;
        idx.push(i);
        cols.push(table.column(i).to_vec());
    }
    let w = match weights {
        Some(w) => {
            if w.len() != y.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} weights for {} rows",
                    w.len(),
                    y.len()
                )));
            }
            w.to_vec()
        }
        None => vec![1.0; y.len()],
    };
    Ok((TrainingSet::new(cols, y, w), idx))
}

/// Fits a classifier of `target` on `features`, tuning forest hyperparameters
/// by random search with cross-validation.
pub fn fit_classifier(
    table: &DatasetTable,
    target: &str,
    features: &[String],
    kind: ModelKind,
    budget: &TuningBudget,
    weights: Option<&[f64]>,
) -> Result<FittedPredictor> {
    let (data, idx) = training_set(table, target, features, weights)?;
    if data.is_degenerate() {
        log::warn!("target `{target}` has a single class; fitting a constant predictor");
    }
    let hyper = match kind {
        ModelKind::Logistic => Hyperparameters::Logistic,
        ModelKind::RandomForest if data.is_degenerate() => {
            Hyperparameters::RandomForest(ForestParams::default())
        }
        ModelKind::RandomForest => {
            Hyperparameters::RandomForest(tuning::tune_on(&data, features, budget)?.best)
        }
    };
    let state = fit_state(&data, features, hyper, budget.seed)?;
    Ok(FittedPredictor {
        kind,
        feature_names: features.to_vec(),
        feature_columns: idx,
        state,
    })
}

/// Fits with fixed hyperparameters (no tuning).
pub fn fit_classifier_with(
    table: &DatasetTable,
    target: &str,
    features: &[String],
    hyper: Hyperparameters,
    seed: u64,
    weights: Option<&[f64]>,
) -> Result<FittedPredictor> {
    let (data, idx) = training_set(table, target, features, weights)?;
    let state = fit_state(&data, features, hyper, seed)?;
    let kind = match hyper {
        Hyperparameters::Logistic => ModelKind::Logistic,
        Hyperparameters::RandomForest(_) => ModelKind::RandomForest,
    };
    Ok(FittedPredictor {
        kind,
        feature_names: features.to_vec(),
        feature_columns: idx,
        state,
    })
}

/// Mean log-loss of predictions `p` against soft labels `y`.
pub fn log_loss(y: &[f64], p: &[f64], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..y.len() {
        let q = p[i].clamp(PROBABILITY_EPS, 1.0 - PROBABILITY_EPS);
        num -= w[i] * (y[i] * q.ln() + (1.0 - y[i]) * (1.0 - q).ln());
        den += w[i];
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnKind, ColumnSpec, Role};

    fn toy(y: Vec<f64>) -> DatasetTable {
        let n = y.len();
        let a: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        DatasetTable::from_columns(
            vec![
                ColumnSpec::new("A", ColumnKind::Binary, Role::Pa),
                ColumnSpec::new("X", ColumnKind::Numeric, Role::Feature),
                ColumnSpec::new("Y", ColumnKind::Binary, Role::Target),
            ],
            vec![a, x, y],
            1.0,
        )
        .unwrap()
    }

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn separable_logistic_classifies_training_rows() {
        let y: Vec<f64> = (0..40).map(|i| f64::from(i >= 20)).collect();
        let t = toy(y.clone());
        let m = fit_classifier(
            &t,
            "Y",
            &names(&["A", "X"]),
            ModelKind::Logistic,
            &TuningBudget::default(),
            None,
        )
        .unwrap();
        for i in 0..40 {
            let p = m.predict(&t.row(i));
            assert_eq!(p >= 0.5, y[i] == 1.0, "row {i}: {p}");
        }
    }

    #[test]
    fn constant_target_gives_constant_predictor() {
        let t = toy(vec![1.0; 30]);
        for kind in [ModelKind::Logistic, ModelKind::RandomForest] {
            let m = fit_classifier(
                &t,
                "Y",
                &names(&["A", "X"]),
                kind,
                &TuningBudget::default(),
                None,
            )
            .unwrap();
            for x in [-5.0, 0.0, 1e6] {
                assert!((m.predict(&[0.0, x, 0.0]) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let y: Vec<f64> = (0..40).map(|i| f64::from(i % 3 == 0)).collect();
        let t = toy(y);
        let budget = TuningBudget {
            evaluations: 2,
            folds: 2,
            seed: 4,
        };
        let m = fit_classifier(
            &t,
            "Y",
            &names(&["A", "X"]),
            ModelKind::RandomForest,
            &budget,
            None,
        )
        .unwrap();
        let back = FittedPredictor::from_json(&m.to_json().unwrap()).unwrap();
        let back = back.bind(&names(&["A", "X", "Y"])).unwrap();
        for i in 0..40 {
            assert_eq!(m.predict(&t.row(i)), back.predict(&t.row(i)));
        }
        let bad = m
            .to_json()
            .unwrap()
            .replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(
            FittedPredictor::from_json(&bad),
            Err(Error::ModelVersion(7))
        ));
    }

    #[test]
    fn predict_named_reports_missing_feature() {
        let m = FittedPredictor::new(
            ModelKind::Logistic,
            names(&["A", "X"]),
            PredictorState::Logistic(LogisticModel {
                coefficients: vec![0.0, 0.0, 0.0],
            }),
        );
        assert_eq!(
            m.predict_named(&names(&["X", "A"]), &[3.0, 1.0]).unwrap(),
            0.5
        );
        let err = m.predict_named(&names(&["A"]), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::MissingFeature(f) if f == "X"));
    }

    #[test]
    fn forest_ignores_training_row_order() {
        let y: Vec<f64> = (0..60).map(|i| f64::from((i * 7) % 5 < 2)).collect();
        let t = toy(y);
        let mut rev: Vec<usize> = (0..60).collect();
        rev.reverse();
        let t2 = t.select_rows(&rev);
        let hyper = Hyperparameters::RandomForest(ForestParams {
            n_trees: 30,
            ..ForestParams::default()
        });
        let f = names(&["A", "X"]);
        let m1 = fit_classifier_with(&t, "Y", &f, hyper, 8, None).unwrap();
        let m2 = fit_classifier_with(&t2, "Y", &f, hyper, 8, None).unwrap();
        assert_eq!(m1.state(), m2.state());
    }
}
