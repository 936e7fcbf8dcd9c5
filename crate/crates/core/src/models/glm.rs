use serde::{Deserialize, Serialize};

use super::irls::{self, Family, IrlsInput, Stop};
use crate::dataset::DatasetTable;
use crate::error::{Error, Result};
use crate::stats::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmFamily {
    BinomialLogit,
    GammaLog,
}

/// A fitted generalized linear model of one column on a list of parent
/// columns. Coefficients are stored intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGlm {
    pub family: GlmFamily,
    pub response: String,
    pub parents: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Pearson dispersion for the gamma family, 1 for the binomial.
    pub dispersion: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const MAX_ITERATIONS: usize = 100;
pub const DEVIANCE_TOLERANCE: f64 = 1e-10;

pub fn fit_glm(
    table: &DatasetTable,
    response: &str,
    parents: &[String],
    family: GlmFamily,
) -> Result<FittedGlm> {
    fit_glm_weighted(table, response, parents, family, None)
}

pub fn fit_glm_weighted(
    table: &DatasetTable,
    response: &str,
    parents: &[String],
    family: GlmFamily,
    weights: Option<&[f64]>,
) -> Result<FittedGlm> {
    let y_idx = table.require_column(response)?;
    let y = table.column(y_idx);
    let mut cols = Vec::with_capacity(parents.len());
    for p in parents {
        cols.push(table.column(table.require_column(p)?));
    }
    fit_glm_columns(response, y, parents, &cols, family, weights)
}

/// Column-level entry point; the table wrapper only resolves names.
pub fn fit_glm_columns(
    response: &str,
    y: &[f64],
    parents: &[String],
    columns: &[&[f64]],
    family: GlmFamily,
    weights: Option<&[f64]>,
) -> Result<FittedGlm> {
    if y.is_empty() {
        return Err(Error::Empty(format!("no rows to fit `{response}`")));
    }
    match family {
        GlmFamily::GammaLog => {
            if let Some((row, &value)) = y.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NonPositiveGamma {
                    column: response.to_string(),
                    row: row + 1,
                    value,
                });
            }
        }
        GlmFamily::BinomialLogit => {
            if let Some(v) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidArgument(format!(
                    "binomial response `{response}` has value {v} outside [0,1]"
                )));
            }
        }
    }

    let n = y.len() as f64;
    let wsum = weights.map_or(n, |w| w.iter().sum());
    let ybar = match weights {
        Some(w) => y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum,
        None => y.iter().sum::<f64>() / n,
    };

    // A constant response has a closed-form intercept-only fit; IRLS would
    // chase an infinite logit for the all-0 / all-1 binomial case.
    let constant = y.iter().all(|v| *v == y[0]);
    if constant {
        if family == GlmFamily::BinomialLogit && (y[0] == 0.0 || y[0] == 1.0) {
            log::warn!(
                "response `{response}` is constant {}; fitting a degenerate intercept",
                y[0]
            );
        }
        let intercept = match family {
            GlmFamily::BinomialLogit => crate::stats::logit(ybar.clamp(1e-12, 1.0 - 1e-12)),
            GlmFamily::GammaLog => ybar.ln(),
        };
        let mut coefficients = vec![0.0; parents.len() + 1];
        coefficients[0] = intercept;
        return Ok(FittedGlm {
            family,
            response: response.to_string(),
            parents: parents.to_vec(),
            coefficients,
            dispersion: if family == GlmFamily::GammaLog {
                0.0
            } else {
                1.0
            },
            iterations: 0,
            converged: true,
        });
    }

    let input = IrlsInput {
        columns: columns.to_vec(),
        names: parents.to_vec(),
        response: y,
        weights,
    };
    let irls_family = match family {
        GlmFamily::BinomialLogit => Family::BinomialLogit,
        GlmFamily::GammaLog => Family::GammaLog,
    };
    let fit = irls::fit(
        irls_family,
        &input,
        Stop::Deviance(DEVIANCE_TOLERANCE),
        MAX_ITERATIONS,
    )?;
    if !fit.converged {
        log::warn!(
            "GLM for `{response}` stopped after {} iterations without converging",
            fit.iterations
        );
    }
    let mut glm = FittedGlm {
        family,
        response: response.to_string(),
        parents: parents.to_vec(),
        coefficients: fit.coefficients,
        dispersion: 1.0,
        iterations: fit.iterations,
        converged: fit.converged,
    };
    if family == GlmFamily::GammaLog {
        let dof = (y.len() as f64 - glm.coefficients.len() as f64).max(1.0);
        let mut pearson = 0.0;
        for i in 0..y.len() {
            let mu = glm.mean_of(|j| columns[j][i]);
            let w = weights.map_or(1.0, |w| w[i]);
            pearson += w * ((y[i] - mu) / mu).powi(2);
        }
        glm.dispersion = pearson / dof;
    }
    Ok(glm)
}

impl FittedGlm {
    /// Linear predictor with parent values supplied by position.
    pub fn linear_predictor_of(&self, parent_value: impl Fn(usize) -> f64) -> f64 {
        let mut eta = self.coefficients[0];
        for j in 0..self.parents.len() {
            eta += self.coefficients[j + 1] * parent_value(j);
        }
        eta
    }

    pub fn mean_of(&self, parent_value: impl Fn(usize) -> f64) -> f64 {
        let eta = self.linear_predictor_of(parent_value);
        match self.family {
            GlmFamily::BinomialLogit => sigmoid(eta),
            GlmFamily::GammaLog => eta.exp(),
        }
    }

    /// Mean given parent values in `parents` order.
    pub fn mean(&self, parent_values: &[f64]) -> f64 {
        assert_eq!(parent_values.len(), self.parents.len());
        self.mean_of(|j| parent_values[j])
    }

    pub fn coefficient(&self, parent: &str) -> Option<f64> {
        self.parents
            .iter()
            .position(|p| p == parent)
            .map(|j| self.coefficients[j + 1])
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    /// Gamma shape implied by the dispersion estimate.
    pub fn gamma_shape(&self) -> f64 {
        1.0 / self.dispersion
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::gamma_quantile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn recovers_logit_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&x| f64::from(rng.random::<f64>() < sigmoid(-1.0 + 2.0 * x)))
            .collect();
        let fit = fit_glm_columns(
            "y",
            &y,
            &names(&["x"]),
            &[&x],
            GlmFamily::BinomialLogit,
            None,
        )
        .unwrap();
        assert!(fit.converged);
        assert!(
            (fit.coefficients[0] + 1.0).abs() < 0.05,
            "{:?}",
            fit.coefficients
        );
        assert!(
            (fit.coefficients[1] - 2.0).abs() < 0.05,
            "{:?}",
            fit.coefficients
        );
    }

    #[test]
    fn recovers_gamma_log_coefficient_on_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let shape = 1.0 / 0.74;
        let mut a = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        let mut x1 = Vec::with_capacity(n);
        for _ in 0..n {
            let ai = f64::from(rng.random::<f64>() < 0.69);
            let ci = 3.64 * gamma_quantile(9.76, rng.random::<f64>().max(1e-16));
            let scale = 0.74 * (7.9 + 0.175 * ai + 0.005 * ci).exp();
            x1.push(scale * gamma_quantile(shape, rng.random::<f64>().max(1e-16)));
            a.push(ai);
            c.push(ci);
        }
        let fit = fit_glm_columns(
            "X1",
            &x1,
            &names(&["A", "C"]),
            &[&a, &c],
            GlmFamily::GammaLog,
            None,
        )
        .unwrap();
        assert!((fit.coefficient("A").unwrap() - 0.175).abs() < 0.02);
        assert!((fit.coefficient("C").unwrap() - 0.005).abs() < 0.002);
        // dispersion of Gamma(shape k) under the log link is 1/k
        assert!((fit.dispersion - 0.74).abs() < 0.03, "{}", fit.dispersion);
    }

    #[test]
    fn constant_response_gives_intercept_only() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = vec![5.0; 4];
        let fit =
            fit_glm_columns("y", &y, &names(&["x"]), &[&x], GlmFamily::GammaLog, None).unwrap();
        assert!((fit.intercept() - 5f64.ln()).abs() < 1e-12);
        assert_eq!(fit.coefficients[1], 0.0);
        let yb = vec![1.0; 4];
        let fit = fit_glm_columns(
            "y",
            &yb,
            &names(&["x"]),
            &[&x],
            GlmFamily::BinomialLogit,
            None,
        )
        .unwrap();
        assert!(fit.mean(&[10.0]) > 1.0 - 1e-9);
    }

    #[test]
    fn rejects_non_positive_gamma_response() {
        let x = vec![1.0, 2.0, 3.0];
        let y = vec![1.0, 0.0, 2.0];
        let err = fit_glm_columns(
            "amount",
            &y,
            &names(&["x"]),
            &[&x],
            GlmFamily::GammaLog,
            None,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::NonPositiveGamma { row: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn singular_design_names_columns() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let z: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y = vec![0.0, 1.0, 0.0, 1.0, 1.0];
        let err = fit_glm_columns(
            "y",
            &y,
            &names(&["x", "z"]),
            &[&x, &z],
            GlmFamily::BinomialLogit,
            None,
        )
        .unwrap_err();
        match err {
            Error::SingularDesign(cols) => assert!(cols.contains(&"z".to_string())),
            other => panic!("unexpected {other}"),
        }
        let k = vec![3.0; 5];
        let err = fit_glm_columns(
            "y",
            &y,
            &names(&["k"]),
            &[&k],
            GlmFamily::BinomialLogit,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularDesign(_)));
    }
}
