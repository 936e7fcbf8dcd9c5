use serde::{Deserialize, Serialize};

use super::irls::{self, Family, IrlsInput, Stop};
use crate::error::Result;
use crate::stats::{logit, sigmoid};

/// Score tolerance on the standardized design.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Intercept first, then one coefficient per feature column.
    pub coefficients: Vec<f64>,
}

impl LogisticModel {
    pub fn constant(p: f64, n_features: usize) -> Self {
        let mut coefficients = vec![0.0; n_features + 1];
        coefficients[0] = logit(p.clamp(1e-15, 1.0 - 1e-15));
        LogisticModel { coefficients }
    }

    /// `x(j)` returns the value of feature `j`.
    pub fn probability_of(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut eta = self.coefficients[0];
        for j in 1..self.coefficients.len() {
            eta += self.coefficients[j] * x(j - 1);
        }
        sigmoid(eta)
    }
}

/// Newton fit of a (weighted, soft-label) logistic regression.
pub fn fit_logistic(
    columns: &[&[f64]],
    names: &[String],
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<LogisticModel> {
    let input = IrlsInput {
        columns: columns.to_vec(),
        names: names.to_vec(),
        response: y,
        weights,
    };
    let fit = irls::fit(
        Family::BinomialLogit,
        &input,
        Stop::Gradient(GRADIENT_TOLERANCE),
        100,
    )?;
    if !fit.converged {
        log::debug!("logistic fit stopped after {} Newton steps", fit.iterations);
    }
    Ok(LogisticModel {
        coefficients: fit.coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn score_vanishes_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0).collect();
        let x2: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<bool>())).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| f64::from(rng.random::<f64>() < sigmoid(0.5 - 0.8 * x1[i] + x2[i])))
            .collect();
        let names = vec!["x1".to_string(), "x2".to_string()];
        let m = fit_logistic(&[&x1, &x2], &names, &y, None).unwrap();
        let mut g = [0.0f64; 3];
        for i in 0..n {
            let r = y[i] - m.probability_of(|j| [x1[i], x2[i]][j]);
            g[0] += r;
            g[1] += r * x1[i];
            g[2] += r * x2[i];
        }
        let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(gmax < 1e-6, "gradient {g:?}");
    }

    #[test]
    fn zero_coefficients_give_one_half() {
        let m = LogisticModel {
            coefficients: vec![0.0, 0.0, 0.0],
        };
        assert_eq!(m.probability_of(|_| 123.0), 0.5);
    }
}
