//! Structural causal models for the mortgage-lending simulation, sampled in
//! coupled pairs: each individual is drawn once in the real world and once in
//! the fair world (PA forced to the advantaged level) from the same
//! exogenous noise.
//!
//! Structural assignments (Φ is the standard normal CDF):
//!
//! ```text
//! A       ~ Bernoulli(0.69)
//! C       ~ Gamma(shape 9.76, scale 3.64)                 (SC)
//! C | A   ~ Gamma(shape 10, scale 2 exp(0.1 + 0.8 A))     (SM)
//! X1 | A,C ~ Gamma(shape 1/0.74, scale 0.74 exp(7.9 + 0.175 A + 0.005 C))
//! X2 | A,C ~ Bernoulli(Φ(4 - 1.25 A - 0.1 C))
//! Y | ...  ~ Bernoulli(Φ(0.9 + 0.1 C + 1.75 A - 0.7 X2 - 0.001 X1))
//! ```
//!
//! Every individual owns a ChaCha stream (`seed`, stream = index) that yields
//! five uniforms. Gamma variables come from inverse-CDF transforms of those
//! uniforms, so the two worlds share noise exactly.

use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dag::CausalDag;
use crate::dataset::{format_number, ColumnKind, ColumnSpec, DatasetTable, Role};
use crate::error::{Error, Result};
use crate::stats::{gamma_quantile, normal_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Correctly specified: C is a pure confounder.
    Sc,
    /// Misspecified: C also depends on A, which the analysis graph omits.
    Sm,
    /// SC with every PA coefficient set to zero.
    Null,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(Scenario::Sc),
            "sm" => Ok(Scenario::Sm),
            "null" => Ok(Scenario::Null),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScmParams {
    pub p_advantaged: f64,
    pub c_shape: f64,
    /// C scale = c_scale * exp(c_log_a * A)
    pub c_scale: f64,
    pub c_log_a: f64,
    pub x1_shape: f64,
    pub x1_intercept: f64,
    pub x1_a: f64,
    pub x1_c: f64,
    pub x2_intercept: f64,
    pub x2_a: f64,
    pub x2_c: f64,
    pub y_intercept: f64,
    pub y_c: f64,
    pub y_a: f64,
    pub y_x2: f64,
    pub y_x1: f64,
}

impl ScmParams {
    pub fn for_scenario(s: Scenario) -> Self {
        let sc = ScmParams {
            p_advantaged: 0.69,
            c_shape: 9.76,
            c_scale: 3.64,
            c_log_a: 0.0,
            x1_shape: 1.0 / 0.74,
            x1_intercept: 7.9,
            x1_a: 0.175,
            x1_c: 0.005,
            x2_intercept: 4.0,
            x2_a: -1.25,
            x2_c: -0.1,
            y_intercept: 0.9,
            y_c: 0.1,
            y_a: 1.75,
            y_x2: -0.7,
            y_x1: -0.001,
        };
        match s {
            Scenario::Sc => sc,
            Scenario::Sm => ScmParams {
                c_shape: 10.0,
                c_scale: 2.0 * (0.1f64).exp(),
                c_log_a: 0.8,
                ..sc
            },
            Scenario::Null => ScmParams {
                x1_a: 0.0,
                x2_a: 0.0,
                y_a: 0.0,
                ..sc
            },
        }
    }

    /// Real-world success probability π(a, c, x1, x2).
    pub fn pi(&self, a: f64, c: f64, x1: f64, x2: f64) -> f64 {
        normal_cdf(self.y_intercept + self.y_c * c + self.y_a * a + self.y_x2 * x2 + self.y_x1 * x1)
    }

    /// Fair-world success probability ψ(c, x1, x2): the PA is fixed at 1.
    pub fn psi(&self, c: f64, x1: f64, x2: f64) -> f64 {
        self.pi(1.0, c, x1, x2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScmRow {
    pub a: f64,
    pub c: f64,
    pub x1: f64,
    pub x2: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub real: ScmRow,
    pub find: ScmRow,
    pub true_pi: f64,
    pub true_psi: f64,
    pub true_delta: f64,
}

fn uniform(rng: &mut ChaCha20Rng) -> f64 {
    // (k + 0.5) / 2^53 lies strictly inside (0, 1).
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

struct Noise {
    a: f64,
    c_std: f64,
    x1_std: f64,
    x2: f64,
    y: f64,
}

fn noise(seed: u64, i: usize, p: &ScmParams) -> Noise {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let (ua, uc, ux1, ux2, uy) = (
        uniform(&mut rng),
        uniform(&mut rng),
        uniform(&mut rng),
        uniform(&mut rng),
        uniform(&mut rng),
    );
    Noise {
        a: ua,
        c_std: gamma_quantile(p.c_shape, uc),
        x1_std: gamma_quantile(p.x1_shape, ux1),
        x2: ux2,
        y: uy,
    }
}

fn assign(p: &ScmParams, u: &Noise, a: f64) -> ScmRow {
    let c = p.c_scale * (p.c_log_a * a).exp() * u.c_std;
    let x1_scale = (1.0 / p.x1_shape) * (p.x1_intercept + p.x1_a * a + p.x1_c * c).exp();
    let x1 = x1_scale * u.x1_std;
    let x2_prob = normal_cdf(p.x2_intercept + p.x2_a * a + p.x2_c * c);
    let x2 = if u.x2 < x2_prob { 1.0 } else { 0.0 };
    let y = if u.y < p.pi(a, c, x1, x2) { 1.0 } else { 0.0 };
    ScmRow { a, c, x1, x2, y }
}

pub fn sample_one(params: &ScmParams, seed: u64, i: usize) -> PairedSample {
    let u = noise(seed, i, params);
    let a = if u.a < params.p_advantaged { 1.0 } else { 0.0 };
    let real = assign(params, &u, a);
    let find = if a == 1.0 {
        real
    } else {
        assign(params, &u, 1.0)
    };
    let true_pi = params.pi(real.a, real.c, real.x1, real.x2);
    let true_psi = params.psi(find.c, find.x1, find.x2);
    PairedSample {
        real,
        find,
        true_pi,
        true_psi,
        true_delta: true_pi - true_psi,
    }
}

pub fn sample_paired(spec: &ScmSpec) -> Vec<PairedSample> {
    let params = ScmParams::for_scenario(spec.scenario);
    (0..spec.n)
        .into_par_iter()
        .map(|i| sample_one(&params, spec.seed, i))
        .collect()
}

/// π(x) - ψ(x_F) for a coupled pair.
pub fn true_ps(params: &ScmParams, real: &ScmRow, find: &ScmRow) -> f64 {
    params.pi(real.a, real.c, real.x1, real.x2) - params.psi(find.c, find.x1, find.x2)
}

/// Ground truth for the decomposition of one individual's privilege score
/// into intercepts and the contributions of the arrows A -> X1 and A -> X2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueDecomposition {
    pub ps: f64,
    pub delta_g: f64,
    pub delta_x: f64,
    pub gamma: [f64; 2],
}

/// Global intercept truth: mean over training individuals of π(x) - ψ(x),
/// both at real feature values.
pub fn true_global_intercept(params: &ScmParams, train: &[PairedSample]) -> f64 {
    let s: f64 = train
        .iter()
        .map(|s| {
            let r = &s.real;
            params.pi(r.a, r.c, r.x1, r.x2) - params.psi(r.c, r.x1, r.x2)
        })
        .sum();
    s / train.len() as f64
}

/// Arrow contributions from the true probability function: coalition values
/// v(S) = π(x) - π(x_S) where x_S takes the fair-world values of the features
/// whose arrows are in S; Shapley values for two players in closed form.
pub fn true_decomposition(
    params: &ScmParams,
    sample: &PairedSample,
    delta_g: f64,
) -> TrueDecomposition {
    let r = &sample.real;
    let f = &sample.find;
    let pi = |x1: f64, x2: f64| params.pi(r.a, r.c, x1, x2);
    let base = pi(r.x1, r.x2);
    let v1 = base - pi(f.x1, r.x2);
    let v2 = base - pi(r.x1, f.x2);
    let v12 = base - pi(f.x1, f.x2);
    let gamma = [0.5 * (v1 + (v12 - v2)), 0.5 * (v2 + (v12 - v1))];
    let ps = sample.true_delta;
    let delta0 = ps - (gamma[0] + gamma[1]);
    TrueDecomposition {
        ps,
        delta_g,
        delta_x: delta0 - delta_g,
        gamma,
    }
}

/// Column layout of simulated tables: A, C, X1, X2, Y.
pub fn columns() -> Vec<ColumnSpec> {
    vec![
        ColumnSpec::new("A", ColumnKind::Binary, Role::Pa),
        ColumnSpec::new("C", ColumnKind::Numeric, Role::Confounder),
        ColumnSpec::new("X1", ColumnKind::Numeric, Role::Feature),
        ColumnSpec::new("X2", ColumnKind::Binary, Role::Feature),
        ColumnSpec::new("Y", ColumnKind::Binary, Role::Target),
    ]
}

/// The graph used for analysis in both scenarios (C confounds X1 and X2).
pub fn analysis_dag() -> CausalDag {
    CausalDag::new(
        &["A", "C", "X1", "X2", "Y"],
        &[
            ("C", "X1"),
            ("C", "X2"),
            ("C", "Y"),
            ("X1", "Y"),
            ("X2", "Y"),
            ("A", "Y"),
            ("A", "X1"),
            ("A", "X2"),
        ],
        "A",
        "Y",
    )
}

pub fn to_table(samples: &[PairedSample]) -> Result<DatasetTable> {
    let r = |f: fn(&ScmRow) -> f64| samples.iter().map(|s| f(&s.real)).collect::<Vec<_>>();
    DatasetTable::from_columns(
        columns(),
        vec![r(|x| x.a), r(|x| x.c), r(|x| x.x1), r(|x| x.x2), r(|x| x.y)],
        1.0,
    )
}

/// Writes real-world rows plus the oracle columns true_pi, true_psi,
/// true_delta.
pub fn write_samples_csv<W: Write>(samples: &[PairedSample], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "A",
        "C",
        "X1",
        "X2",
        "Y",
        "true_pi",
        "true_psi",
        "true_delta",
    ])?;
    for s in samples {
        let r = &s.real;
        w.write_record(
            [
                r.a,
                r.c,
                r.x1,
                r.x2,
                r.y,
                s.true_pi,
                s.true_psi,
                s.true_delta,
            ]
            .map(format_number),
        )?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn save_samples_csv(samples: &[PairedSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_samples_csv(samples, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_is_reproducible() {
        let spec = ScmSpec {
            scenario: Scenario::Sm,
            n: 200,
            seed: 11,
        };
        assert_eq!(sample_paired(&spec), sample_paired(&spec));
        let other = ScmSpec { seed: 12, ..spec };
        assert_ne!(sample_paired(&spec), sample_paired(&other));
    }

    #[test]
    fn advantaged_twins_are_identical() {
        for scenario in [Scenario::Sc, Scenario::Sm] {
            let s = sample_paired(&ScmSpec {
                scenario,
                n: 500,
                seed: 3,
            });
            for p in s.iter().filter(|p| p.real.a == 1.0) {
                assert_eq!(p.real, p.find);
                assert_eq!(p.true_delta, 0.0);
            }
            for p in &s {
                assert_eq!(p.find.a, 1.0);
                assert!((-1.0..=1.0).contains(&p.true_delta));
                assert!((0.0..=1.0).contains(&p.true_pi) && (0.0..=1.0).contains(&p.true_psi));
                assert_eq!(p.true_delta, p.true_pi - p.true_psi);
            }
        }
    }

    #[test]
    fn twin_recomputes_descendants_from_shared_noise() {
        let params = ScmParams::for_scenario(Scenario::Sc);
        let s = sample_paired(&ScmSpec {
            scenario: Scenario::Sc,
            n: 400,
            seed: 5,
        });
        let p = s.iter().find(|p| p.real.a == 0.0).unwrap();
        // SC: C is untouched; X1 scales by exp(0.175) under common noise.
        assert_eq!(p.real.c, p.find.c);
        assert!((p.find.x1 / p.real.x1 - 0.175f64.exp()).abs() < 1e-12);
        // Hand-evaluate both probit arguments for this pair.
        let z_real = 0.9 + 0.1 * p.real.c - 0.7 * p.real.x2 - 0.001 * p.real.x1;
        let z_find = 0.9 + 0.1 * p.find.c + 1.75 - 0.7 * p.find.x2 - 0.001 * p.find.x1;
        let expected = normal_cdf(z_real) - normal_cdf(z_find);
        assert!((true_ps(&params, &p.real, &p.find) - expected).abs() < 1e-15);
        assert_eq!(true_ps(&params, &p.real, &p.find), p.true_delta);

        let sm = sample_paired(&ScmSpec {
            scenario: Scenario::Sm,
            n: 400,
            seed: 5,
        });
        let q = sm.iter().find(|p| p.real.a == 0.0).unwrap();
        assert!((q.find.c / q.real.c - 0.8f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn shapley_truth_is_efficient() {
        let params = ScmParams::for_scenario(Scenario::Sc);
        let s = sample_paired(&ScmSpec {
            scenario: Scenario::Sc,
            n: 300,
            seed: 9,
        });
        let dg = true_global_intercept(&params, &s);
        for p in &s {
            let t = true_decomposition(&params, p, dg);
            let r = &p.real;
            let f = &p.find;
            let v_full = params.pi(r.a, r.c, r.x1, r.x2) - params.pi(r.a, r.c, f.x1, f.x2);
            assert!((t.gamma[0] + t.gamma[1] - v_full).abs() < 1e-14);
            assert!((t.delta_g + t.delta_x + t.gamma[0] + t.gamma[1] - t.ps).abs() < 1e-14);
            if r.a == 1.0 {
                assert_eq!(t.gamma, [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn sc_mean_true_ps_is_negative() {
        let s = sample_paired(&ScmSpec {
            scenario: Scenario::Sc,
            n: 100_000,
            seed: 1,
        });
        let m = s.iter().map(|p| p.true_delta).sum::<f64>() / s.len() as f64;
        assert!(m < 0.0, "mean true PS {m}");
    }
}
