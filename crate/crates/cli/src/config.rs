//! Run configuration: JSON file values, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use privscore::models::{ModelKind, TuningBudget};
use privscore::privilege::{BootstrapConfig, PipelineSpec, Retune};
use privscore::psc::{MeanConvention, PscOptions, Route};
use privscore::scm::Scenario;
use privscore::stats::derive_seed;
use privscore::study::{QuantilesOver, SimulationConfig};
use privscore::{Error, Result};

pub const SIMULATION_ALPHA: f64 = 0.1;
pub const AUDIT_QUANTILE_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelKind,
    pub evaluations: usize,
    pub folds: usize,
    pub bootstrap: usize,
    pub retune: Retune,
    /// Bootstrap interval level; defaults to 0.1.
    pub alpha: Option<f64>,
    /// Level of the audit's subgroup quantile tables; defaults to 0.05.
    pub quantile_alpha: Option<f64>,
    pub split: f64,
    pub route: Route,
    pub means: MeanConvention,
    pub out: Option<PathBuf>,
    pub scenario: Scenario,
    pub n: usize,
    pub iterations: usize,
    pub quantiles_over: QuantilesOver,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelKind::RandomForest,
            evaluations: 25,
            folds: 3,
            bootstrap: 100,
            retune: Retune::Auto,
            alpha: None,
            quantile_alpha: None,
            split: 0.8,
            route: Route::Real,
            means: MeanConvention::RealFeatures,
            out: None,
            scenario: Scenario::Sc,
            n: 1000,
            iterations: 10,
            quantiles_over: QuantilesOver::Iterations,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split must lie in (0,1), got {}",
                self.split
            )));
        }
        self.budget(0).validate()?;
        self.bootstrap_config(0).validate()?;
        let q = self.quantile_alpha();
        if !(q > 0.0 && q < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "quantile_alpha must lie in (0, 0.5), got {q}"
            )));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(SIMULATION_ALPHA)
    }

    pub fn quantile_alpha(&self) -> f64 {
        self.quantile_alpha.unwrap_or(AUDIT_QUANTILE_ALPHA)
    }

    pub fn budget(&self, seed: u64) -> TuningBudget {
        TuningBudget {
            evaluations: self.evaluations,
            folds: self.folds,
            seed,
        }
    }

    pub fn pipeline(&self, seed: u64) -> PipelineSpec {
        PipelineSpec {
            kind: self.model,
            budget: self.budget(seed),
        }
    }

    pub fn bootstrap_config(&self, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.bootstrap,
            alpha: self.alpha(),
            seed,
            retune: self.retune,
        }
    }

    pub fn options(&self) -> PscOptions {
        PscOptions {
            route: self.route,
            means: self.means,
        }
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            scenario: self.scenario,
            n: self.n,
            iterations: self.iterations,
            split: self.split,
            seed: self.seed,
            pipeline: self.pipeline(0),
            bootstrap: self.bootstrap_config(0),
            options: self.options(),
            quantiles_over: self.quantiles_over,
        }
    }

    /// Seeds of the audit stages: split, tuning, bootstrap.
    pub fn audit_seeds(&self) -> (u64, u64, u64) {
        (
            derive_seed(self.seed, 1),
            derive_seed(self.seed, 2),
            derive_seed(self.seed, 3),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.alpha(), 0.1);
        assert_eq!(c.quantile_alpha(), 0.05);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"boot": 5}"#).is_err());
    }

    #[test]
    fn small_bootstrap_is_invalid() {
        let c = RunConfig {
            bootstrap: 5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
