//! Privilege score estimation: the real/warped model pair, point estimates
//! and percentile bootstrap intervals.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dag::ValidatedDag;
use crate::dataset::DatasetTable;
use crate::error::{Error, Result};
use crate::models::{
    fit_classifier, fit_classifier_with, FittedPredictor, Hyperparameters, ModelKind, TuningBudget,
};
use crate::stats::{derive_seed, quantile_sorted, sample_cov, sample_var};
use crate::warp::{fit_warper, Coalition, Warper};

/// How models are fitted inside one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub kind: ModelKind,
    pub budget: TuningBudget,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec {
            kind: ModelKind::RandomForest,
            budget: TuningBudget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModels {
    pub real_model: FittedPredictor,
    pub warped_model: FittedPredictor,
    pub warper: Warper,
    /// Mean of the real-world model over training rows.
    pub train_mean_real: f64,
    /// Mean of the warped-world model over the same rows at their real
    /// feature values.
    pub train_mean_warped: f64,
    /// Mean of the warped-world model over the warped training rows; only
    /// used when the alternative intercept convention is requested.
    pub train_mean_warped_at_warped: f64,
    pub spec: PipelineSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsEstimate {
    pub delta_hat: f64,
    pub pred_real: f64,
    pub pred_warped: f64,
}

/// Names of the model inputs: PA, confounders and features in column order.
pub fn predictor_names(table: &DatasetTable) -> Vec<String> {
    table
        .predictor_indices()
        .into_iter()
        .map(|i| table.columns()[i].name.clone())
        .collect()
}

fn train_means(
    real: &FittedPredictor,
    warped: &FittedPredictor,
    train: &DatasetTable,
    warped_train: &DatasetTable,
) -> (f64, f64, f64) {
    let n = train.n_rows() as f64;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for i in 0..train.n_rows() {
        let row = train.row(i);
        a += real.predict(&row);
        b += warped.predict(&row);
        c += warped.predict(&warped_train.row(i));
    }
    (a / n, b / n, c / n)
}

/// Fits the warper, warps the training data and fits both predictors,
/// tuning hyperparameters per `spec`.
pub fn build_worlds(
    train: &DatasetTable,
    dag: &ValidatedDag,
    spec: &PipelineSpec,
) -> Result<WorldModels> {
    build(train, dag, spec, None, spec.budget.seed)
}

/// Same pipeline with hyperparameters fixed for the (real, warped) models.
pub fn build_worlds_with(
    train: &DatasetTable,
    dag: &ValidatedDag,
    spec: &PipelineSpec,
    hyper: (Hyperparameters, Hyperparameters),
    seed: u64,
) -> Result<WorldModels> {
    build(train, dag, spec, Some(hyper), seed)
}

fn build(
    train: &DatasetTable,
    dag: &ValidatedDag,
    spec: &PipelineSpec,
    hyper: Option<(Hyperparameters, Hyperparameters)>,
    seed: u64,
) -> Result<WorldModels> {
    let warper = fit_warper(train, dag)?;
    let warped_train = warper.warp_training_set(train)?;
    let features = predictor_names(train);
    let target = dag.target();
    let (real_model, warped_model) = match hyper {
        None => {
            let b_real = TuningBudget {
                seed,
                ..spec.budget
            };
            let b_warped = TuningBudget {
                seed: derive_seed(seed, 1),
                ..spec.budget
            };
            (
                fit_classifier(train, target, &features, spec.kind, &b_real, None)?,
                fit_classifier(&warped_train, target, &features, spec.kind, &b_warped, None)?,
            )
        }
        Some((hr, hw)) => (
            fit_classifier_with(train, target, &features, hr, seed, None)?,
            fit_classifier_with(
                &warped_train,
                target,
                &features,
                hw,
                derive_seed(seed, 1),
                None,
            )?,
        ),
    };
    let (m_real, m_warped, m_ww) = train_means(&real_model, &warped_model, train, &warped_train);
    Ok(WorldModels {
        real_model,
        warped_model,
        warper,
        train_mean_real: m_real,
        train_mean_warped: m_warped,
        train_mean_warped_at_warped: m_ww,
        spec: *spec,
    })
}

impl WorldModels {
    pub fn k(&self) -> usize {
        self.warper.k()
    }

    pub fn full_coalition(&self) -> Coalition {
        Coalition::full(self.k())
    }

    /// δ̂ = π̂(x) - φ̂(x̃) for a record laid out as the training table.
    pub fn estimate_ps(&self, row: &[f64]) -> PsEstimate {
        let warped = self.warper.warp_row(row, self.full_coalition());
        let pred_real = self.real_model.predict(row);
        let pred_warped = self.warped_model.predict(&warped);
        PsEstimate {
            delta_hat: pred_real - pred_warped,
            pred_real,
            pred_warped,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = WorldsDocument {
            real_model: serde_json::from_str(&self.real_model.to_json()?)?,
            warped_model: serde_json::from_str(&self.warped_model.to_json()?)?,
            warper: self.warper.clone(),
            train_mean_real: self.train_mean_real,
            train_mean_warped: self.train_mean_warped,
            train_mean_warped_at_warped: self.train_mean_warped_at_warped,
            spec: self.spec,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Reads a stored model pair; predictors are bound to the warper's
    /// column layout.
    pub fn from_json(json: &str) -> Result<Self> {
        let doc: WorldsDocument = serde_json::from_str(json)?;
        let schema = doc.warper.schema().to_vec();
        let real_model = FittedPredictor::from_json(&doc.real_model.to_string())?.bind(&schema)?;
        let warped_model =
            FittedPredictor::from_json(&doc.warped_model.to_string())?.bind(&schema)?;
        Ok(WorldModels {
            real_model,
            warped_model,
            warper: doc.warper,
            train_mean_real: doc.train_mean_real,
            train_mean_warped: doc.train_mean_warped,
            train_mean_warped_at_warped: doc.train_mean_warped_at_warped,
            spec: doc.spec,
        })
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

#[derive(Serialize, Deserialize)]
struct WorldsDocument {
    real_model: serde_json::Value,
    warped_model: serde_json::Value,
    warper: Warper,
    train_mean_real: f64,
    train_mean_warped: f64,
    #[serde(default)]
    train_mean_warped_at_warped: f64,
    spec: PipelineSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub replicates: Vec<f64>,
}

impl BootstrapInterval {
    /// Percentile interval: type-7 quantiles at α/2 and 1 - α/2.
    pub fn from_replicates(replicates: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if replicates.is_empty() {
            return Err(Error::Empty("no bootstrap replicates".into()));
        }
        let mut sorted = replicates.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(BootstrapInterval {
            lower: quantile_sorted(&sorted, alpha / 2.0),
            upper: quantile_sorted(&sorted, 1.0 - alpha / 2.0),
            alpha,
            replicates,
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn b(&self) -> usize {
        self.replicates.len()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// When bootstrap replicates re-run hyperparameter search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retune {
    /// Re-tune only when the budget is small (at most five evaluations).
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub retune: Retune,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 100,
            alpha: 0.1,
            seed: 0,
            retune: Retune::Auto,
        }
    }
}

pub const MIN_REPLICATES: usize = 20;
pub const MAX_RETRIES: usize = 3;

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.replicates < MIN_REPLICATES {
            return Err(Error::InvalidArgument(format!(
                "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
                self.replicates
            )));
        }
        Ok(())
    }

    fn retunes(&self, budget: &TuningBudget) -> bool {
        match self.retune {
            Retune::Auto => budget.evaluations <= 5,
            Retune::Always => true,
            Retune::Never => false,
        }
    }
}

/// Runs the full pipeline on `replicates` resamples of `train` and applies
/// `eval` to each fitted model pair. Replicate `b` draws from a stream keyed
/// by `(seed, b)`; a failing replicate is retried on a fresh resample up to
/// three times, then dropped with a warning. Output is in replicate order.
pub fn bootstrap_pipelines<T, F>(
    train: &DatasetTable,
    dag: &ValidatedDag,
    reference: &WorldModels,
    cfg: &BootstrapConfig,
    eval: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&WorldModels) -> T + Sync,
{
    cfg.validate()?;
    let spec = reference.spec;
    let retune = cfg.retunes(&spec.budget);
    let hyper = (
        reference.real_model.hyperparameters(),
        reference.warped_model.hyperparameters(),
    );
    let n = train.n_rows();
    let results: Vec<Option<T>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let rep_seed = derive_seed(cfg.seed, b as u64);
            for attempt in 0..=MAX_RETRIES {
                let s = derive_seed(rep_seed, attempt as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let sample = train.select_rows(&idx);
                let fitted = if retune {
                    let spec_b = PipelineSpec {
                        budget: TuningBudget {
                            seed: s,
                            ..spec.budget
                        },
                        ..spec
                    };
                    build_worlds(&sample, dag, &spec_b)
                } else {
                    build_worlds_with(&sample, dag, &spec, hyper, s)
                };
                match fitted {
                    Ok(w) => return Some(eval(&w)),
                    Err(e) => log::warn!("bootstrap replicate {b} attempt {attempt} failed: {e}"),
                }
            }
            log::warn!("bootstrap replicate {b} skipped after {MAX_RETRIES} retries");
            None
        })
        .collect();
    let out: Vec<T> = results.into_iter().flatten().collect();
    if out.is_empty() {
        return Err(Error::Fit("every bootstrap replicate failed".into()));
    }
    Ok(out)
}

/// Percentile intervals of the privilege score for each of `rows`.
pub fn bootstrap_ps(
    train: &DatasetTable,
    dag: &ValidatedDag,
    rows: &[Vec<f64>],
    reference: &WorldModels,
    cfg: &BootstrapConfig,
) -> Result<Vec<BootstrapInterval>> {
    let reps = bootstrap_pipelines(train, dag, reference, cfg, |w| {
        rows.iter().map(|r| w.estimate_ps(r)).collect::<Vec<_>>()
    })?;
    (0..rows.len())
        .map(|i| {
            BootstrapInterval::from_replicates(
                reps.iter().map(|r| r[i].delta_hat).collect(),
                cfg.alpha,
            )
        })
        .collect()
}

/// Bootstrap replicates of (π̂(x), φ̂(x̃)) for one row.
pub fn bootstrap_predictions(
    train: &DatasetTable,
    dag: &ValidatedDag,
    row: &[f64],
    reference: &WorldModels,
    cfg: &BootstrapConfig,
) -> Result<Vec<PsEstimate>> {
    bootstrap_pipelines(train, dag, reference, cfg, |w| w.estimate_ps(row))
}

/// |var(δ̂_b) - (var(π̂_b) + var(φ̂_b) - 2 cov(π̂_b, φ̂_b))| with matching
/// `n - 1` sample moments.
pub fn variance_identity_check(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(
            "variance identity needs at least two replicates".into(),
        ));
    }
    let real: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let warped: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let delta: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let lhs = sample_var(&delta);
    let rhs = sample_var(&real) + sample_var(&warped) - 2.0 * sample_cov(&real, &warped);
    Ok((lhs - rhs).abs())
}
