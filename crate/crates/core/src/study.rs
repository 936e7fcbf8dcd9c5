//! Simulation study: repeated coupled sampling, pipeline fits and bootstrap
//! intervals scored against the closed-form truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dag::validate;
use crate::dataset::split_n;
use crate::error::{Error, Result};
use crate::privilege::{build_worlds, BootstrapConfig, PipelineSpec};
use crate::psc::{bootstrap_psc, component_names, psc, PscOptions, Route};
use crate::scm::{self, PairedSample, Scenario, ScmParams, ScmSpec, TrueDecomposition};
use crate::stats::{derive_seed, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuantilesOver {
    /// Quantiles of the per-iteration means.
    #[default]
    Iterations,
    /// Quantiles of the pooled per-individual values.
    Individuals,
}

impl std::str::FromStr for QuantilesOver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iterations" => Ok(QuantilesOver::Iterations),
            "individuals" => Ok(QuantilesOver::Individuals),
            other => Err(Error::InvalidArgument(format!(
                "unknown quantile population `{other}` (expected iterations or individuals)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub iterations: usize,
    pub split: f64,
    pub seed: u64,
    pub pipeline: PipelineSpec,
    pub bootstrap: BootstrapConfig,
    pub options: PscOptions,
    pub quantiles_over: QuantilesOver,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            scenario: Scenario::Sc,
            n: 1000,
            iterations: 10,
            split: 0.8,
            seed: 0,
            pipeline: PipelineSpec::default(),
            bootstrap: BootstrapConfig::default(),
            options: PscOptions::default(),
            quantiles_over: QuantilesOver::Iterations,
        }
    }
}

/// Per-individual outcome for one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub estimate: f64,
    pub truth: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Scored {
    fn error(&self) -> f64 {
        self.estimate - self.truth
    }
    fn covered(&self) -> bool {
        self.lower <= self.truth && self.truth <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub iteration: usize,
    /// `scored[c][i]`: component `c`, test individual `i`.
    pub scored: Vec<Vec<Scored>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

impl MetricSummary {
    fn of(per_iteration: &[f64], pooled: &[f64], over: QuantilesOver) -> Self {
        let pop = match over {
            QuantilesOver::Iterations => per_iteration,
            QuantilesOver::Individuals => pooled,
        };
        MetricSummary {
            mean: per_iteration.iter().sum::<f64>() / per_iteration.len() as f64,
            q05: quantile(pop, 0.05),
            q95: quantile(pop, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMetrics {
    pub component: String,
    pub bias: MetricSummary,
    pub mse: MetricSummary,
    pub coverage: MetricSummary,
    pub ci_width: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    pub n: usize,
    pub iterations: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub quantiles_over: QuantilesOver,
    pub components: Vec<ComponentMetrics>,
}

impl MetricsReport {
    pub fn component(&self, name: &str) -> Option<&ComponentMetrics> {
        self.components.iter().find(|c| c.component == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,metric,mean,q05,q95\n");
        for c in &self.components {
            for (metric, m) in [
                ("bias", c.bias),
                ("mse", c.mse),
                ("coverage", c.coverage),
                ("ci_width", c.ci_width),
            ] {
                s.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6}\n",
                    c.component, metric, m.mean, m.q05, m.q95
                ));
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Truth for the warped route: contributions measured with ψ, and the local
/// intercept π(x) - ψ(x).
fn true_decomposition_warped(p: &ScmParams, s: &PairedSample, delta_g: f64) -> TrueDecomposition {
    let r = &s.real;
    let f = &s.find;
    let psi = |x1: f64, x2: f64| p.psi(r.c, x1, x2);
    let base = psi(r.x1, r.x2);
    let v1 = base - psi(f.x1, r.x2);
    let v2 = base - psi(r.x1, f.x2);
    let v12 = base - psi(f.x1, f.x2);
    let gamma = [0.5 * (v1 + (v12 - v2)), 0.5 * (v2 + (v12 - v1))];
    let delta0 = s.true_delta - gamma[0] - gamma[1];
    TrueDecomposition {
        ps: s.true_delta,
        delta_g,
        delta_x: delta0 - delta_g,
        gamma,
    }
}

pub fn run_iteration(cfg: &SimulationConfig, m: usize) -> Result<IterationResult> {
    let it_seed = derive_seed(cfg.seed, m as u64);
    let samples = scm::sample_paired(&ScmSpec {
        scenario: cfg.scenario,
        n: cfg.n,
        seed: it_seed,
    });
    let params = ScmParams::for_scenario(cfg.scenario);
    let split = split_n(cfg.n, cfg.split, derive_seed(it_seed, 1))?;
    let train_samples: Vec<PairedSample> = split.train.iter().map(|&i| samples[i]).collect();
    let test_samples: Vec<PairedSample> = split.test.iter().map(|&i| samples[i]).collect();
    let train = scm::to_table(&train_samples)?;
    let test = scm::to_table(&test_samples)?;
    let dag = validate(&scm::analysis_dag(), &train)?;

    let spec = PipelineSpec {
        budget: crate::models::TuningBudget {
            seed: derive_seed(it_seed, 2),
            ..cfg.pipeline.budget
        },
        ..cfg.pipeline
    };
    let worlds = build_worlds(&train, &dag, &spec)?;
    let rows: Vec<Vec<f64>> = test.rows().collect();
    let point = rows
        .iter()
        .map(|r| psc(&worlds, r, cfg.options))
        .collect::<Result<Vec<_>>>()?;
    let boot = BootstrapConfig {
        seed: derive_seed(it_seed, 3),
        ..cfg.bootstrap
    };
    let intervals = bootstrap_psc(&train, &dag, &rows, &worlds, &boot, cfg.options)?;

    let delta_g = scm::true_global_intercept(&params, &train_samples);
    let truth: Vec<TrueDecomposition> = test_samples
        .iter()
        .map(|s| match cfg.options.route {
            Route::Real => scm::true_decomposition(&params, s, delta_g),
            Route::Warped => true_decomposition_warped(&params, s, delta_g),
        })
        .collect();

    let n_comp = 3 + worlds.k();
    let scored = (0..n_comp)
        .map(|c| {
            (0..rows.len())
                .map(|i| {
                    let t = &truth[i];
                    let truth_c = match c {
                        0 => t.ps,
                        1 => t.delta_g,
                        2 => t.delta_x,
                        j => t.gamma[j - 3],
                    };
                    let ci = &intervals[i].components[c];
                    Scored {
                        estimate: point[i].components()[c],
                        truth: truth_c,
                        lower: ci.lower,
                        upper: ci.upper,
                    }
                })
                .collect()
        })
        .collect();
    Ok(IterationResult {
        iteration: m,
        scored,
    })
}

pub fn summarize(cfg: &SimulationConfig, results: &[IterationResult]) -> Result<MetricsReport> {
    let first = results
        .first()
        .ok_or_else(|| Error::Empty("no simulation iterations".into()))?;
    let n_comp = first.scored.len();
    let names = component_names(n_comp - 3);
    let components = (0..n_comp)
        .map(|c| {
            let mut it = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
            let mut pooled = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
            for r in results {
                let v = &r.scored[c];
                let m = v.len() as f64;
                let err: Vec<f64> = v.iter().map(Scored::error).collect();
                let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
                let cov: Vec<f64> = v.iter().map(|s| f64::from(u8::from(s.covered()))).collect();
                let wid: Vec<f64> = v.iter().map(|s| s.upper - s.lower).collect();
                for (k, xs) in [err, sq, cov, wid].into_iter().enumerate() {
                    it[k].push(xs.iter().sum::<f64>() / m);
                    pooled[k].extend(xs);
                }
            }
            let s = |k: usize| MetricSummary::of(&it[k], &pooled[k], cfg.quantiles_over);
            ComponentMetrics {
                component: names[c].clone(),
                bias: s(0),
                mse: s(1),
                coverage: s(2),
                ci_width: s(3),
            }
        })
        .collect();
    Ok(MetricsReport {
        scenario: cfg.scenario,
        n: cfg.n,
        iterations: results.len(),
        replicates: cfg.bootstrap.replicates,
        alpha: cfg.bootstrap.alpha,
        quantiles_over: cfg.quantiles_over,
        components,
    })
}

/// Runs every iteration (concurrently, merged in iteration order) and
/// aggregates the metrics.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<MetricsReport> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidArgument(
            "simulation needs at least one iteration".into(),
        ));
    }
    if cfg.n < 10 {
        return Err(Error::InvalidArgument(format!(
            "sample size {} too small to split",
            cfg.n
        )));
    }
    cfg.bootstrap.validate()?;
    cfg.pipeline.budget.validate()?;
    let results = (0..cfg.iterations)
        .into_par_iter()
        .map(|m| run_iteration(cfg, m))
        .collect::<Result<Vec<_>>>()?;
    summarize(cfg, &results)
}
