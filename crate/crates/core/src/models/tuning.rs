//! Random search over forest hyperparameters, scored by k-fold CV log-loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::ForestParams;
use super::{fit_state, log_loss, Hyperparameters, PredictorState, TrainingSet};
use crate::dataset::DatasetTable;
use crate::error::{Error, Result};
use crate::stats::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningBudget {
    pub evaluations: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TuningBudget {
    fn default() -> Self {
        TuningBudget {
            evaluations: 25,
            folds: 3,
            seed: 0,
        }
    }
}

impl TuningBudget {
    pub fn validate(&self) -> Result<()> {
        if self.evaluations < 1 {
            return Err(Error::InvalidArgument(
                "tuning needs at least one evaluation".into(),
            ));
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument(
                "cross-validation needs at least two folds".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub best: ForestParams,
    pub best_score: f64,
    /// Every evaluated configuration with its CV log-loss, in draw order.
    pub trials: Vec<(ForestParams, f64)>,
}

pub fn sample_params(rng: &mut impl Rng) -> ForestParams {
    ForestParams {
        n_trees: rng.random_range(100..=500),
        max_depth: rng.random_range(2..=20),
        min_leaf: rng.random_range(1..=20),
        feature_fraction: rng.random_range(0.3..=1.0),
    }
}

fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

pub(crate) fn cv_log_loss(
    data: &TrainingSet,
    names: &[String],
    hyper: Hyperparameters,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let assign = fold_assignment(data.len(), folds, derive_seed(seed, 0xF01D));
    let (mut num, mut den) = (0.0, 0.0);
    for f in 0..folds {
        let train: Vec<usize> = (0..data.len()).filter(|&i| assign[i] != f).collect();
        let test: Vec<usize> = (0..data.len()).filter(|&i| assign[i] == f).collect();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let tr = data.subset(&train);
        let state = fit_state(&tr, names, hyper, derive_seed(seed, f as u64))?;
        let p: Vec<f64> = test
            .iter()
            .map(|&i| {
                let x = |j: usize| data.columns[j][i];
                match &state {
                    PredictorState::Constant { probability } => *probability,
                    PredictorState::Logistic(m) => m.probability_of(x),
                    PredictorState::RandomForest(m) => m.probability_of(x),
                }
            })
            .collect();
        let y: Vec<f64> = test.iter().map(|&i| data.y[i]).collect();
        let w: Vec<f64> = test.iter().map(|&i| data.w[i]).collect();
        let wsum: f64 = w.iter().sum();
        num += log_loss(&y, &p, &w) * wsum;
        den += wsum;
    }
    Ok(num / den)
}

pub(crate) fn tune_on(
    data: &TrainingSet,
    names: &[String],
    budget: &TuningBudget,
) -> Result<TuningResult> {
    budget.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let candidates: Vec<ForestParams> = (0..budget.evaluations)
        .map(|_| sample_params(&mut rng))
        .collect();
    let scores: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|p| {
            cv_log_loss(
                data,
                names,
                Hyperparameters::RandomForest(*p),
                budget.folds,
                budget.seed,
            )
        })
        .collect();
    let mut trials = Vec::with_capacity(candidates.len());
    for (p, s) in candidates.into_iter().zip(scores) {
        trials.push((p, s?));
    }
    let (best, best_score) = trials
        .iter()
        .copied()
        .fold(None::<(ForestParams, f64)>, |acc, (p, s)| match acc {
            Some((_, bs)) if bs <= s => acc,
            _ => Some((p, s)),
        })
        .expect("at least one evaluation");
    Ok(TuningResult {
        best,
        best_score,
        trials,
    })
}

/// Public tuning entry point working on a table.
pub fn tune_forest(
    table: &DatasetTable,
    target: &str,
    features: &[String],
    budget: &TuningBudget,
) -> Result<TuningResult> {
    let y = table.column_by_name(target)?.to_vec();
    let cols = features
        .iter()
        .map(|f| table.column_by_name(f).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    let w = vec![1.0; y.len()];
    tune_on(&TrainingSet::new(cols, y, w), features, budget)
}

/// CV log-loss of the base-rate predictor under the same fold layout, the
/// natural reference for a tuned score.
pub fn constant_cv_log_loss(
    table: &DatasetTable,
    target: &str,
    budget: &TuningBudget,
) -> Result<f64> {
    let y = table.column_by_name(target)?.to_vec();
    let assign = fold_assignment(y.len(), budget.folds, derive_seed(budget.seed, 0xF01D));
    let (mut num, mut den) = (0.0, 0.0);
    for f in 0..budget.folds {
        let tr: Vec<f64> = (0..y.len())
            .filter(|&i| assign[i] != f)
            .map(|i| y[i])
            .collect();
        let te: Vec<f64> = (0..y.len())
            .filter(|&i| assign[i] == f)
            .map(|i| y[i])
            .collect();
        if tr.is_empty() || te.is_empty() {
            continue;
        }
        let rate = tr.iter().sum::<f64>() / tr.len() as f64;
        let p = vec![rate; te.len()];
        num += log_loss(&te, &p, &vec![1.0; te.len()]) * te.len() as f64;
        den += te.len() as f64;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn search_space_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let p = sample_params(&mut rng);
            assert!((100..=500).contains(&p.n_trees));
            assert!((2..=20).contains(&p.max_depth));
            assert!((1..=20).contains(&p.min_leaf));
            assert!((0.3..=1.0).contains(&p.feature_fraction));
        }
    }

    #[test]
    fn folds_are_balanced() {
        let f = fold_assignment(10, 3, 2);
        let counts: Vec<usize> = (0..3)
            .map(|k| f.iter().filter(|&&v| v == k).count())
            .collect();
        assert_eq!(counts.iter().sum::<usize>(), 10);
        assert!(counts.iter().all(|&c| c == 3 || c == 4));
    }

    #[test]
    fn budget_validation() {
        assert!(TuningBudget {
            evaluations: 0,
            folds: 3,
            seed: 0
        }
        .validate()
        .is_err());
        assert!(TuningBudget {
            evaluations: 1,
            folds: 1,
            seed: 0
        }
        .validate()
        .is_err());
    }
}
