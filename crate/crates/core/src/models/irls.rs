//! Iteratively reweighted least squares for the two exponential families the
//! pipeline needs: binomial with logit link and gamma with log link.
//!
//! Predictors are centred and scaled before solving; coefficients are mapped
//! back to the original scale afterwards.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Family {
    BinomialLogit,
    GammaLog,
}

pub(crate) struct IrlsInput<'a> {
    /// Predictor columns (no intercept column), each of length n.
    pub columns: Vec<&'a [f64]>,
    pub names: Vec<String>,
    pub response: &'a [f64],
    pub weights: Option<&'a [f64]>,
}

pub(crate) enum Stop {
    /// |dev - dev_old| / (|dev| + 0.1) below the threshold.
    Deviance(f64),
    /// Max-norm of the score on the standardized scale below the threshold.
    Gradient(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct IrlsFit {
    /// Intercept first, then one coefficient per predictor column.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Scaled {
    x: DMatrix<f64>,
    centre: Vec<f64>,
    scale: Vec<f64>,
}

fn standardize(input: &IrlsInput<'_>) -> Result<Scaled> {
    let n = input.response.len();
    let p = input.columns.len();
    let mut centre = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    let mut x = DMatrix::<f64>::zeros(n, p + 1);
    x.column_mut(0).fill(1.0);
    for (j, col) in input.columns.iter().enumerate() {
        let m = col.iter().sum::<f64>() / n as f64;
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::SingularDesign(vec![
                "(intercept)".into(),
                input.names[j].clone(),
            ]));
        }
        for i in 0..n {
            x[(i, j + 1)] = (col[i] - m) / s;
        }
        centre.push(m);
        scale.push(s);
    }
    check_rank(&x, &input.names)?;
    Ok(Scaled { x, centre, scale })
}

/// Gram-Schmidt pass over the design columns, naming any column that is
/// (numerically) a combination of earlier ones.
pub(crate) fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let label = |j: usize| {
        if j == 0 {
            "(intercept)".to_string()
        } else {
            names[j - 1].clone()
        }
    };
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..x.ncols() {
        let mut v = x.column(j).into_owned();
        let norm0 = v.norm();
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            let mut involved: Vec<String> = (0..j).map(label).collect();
            involved.push(label(j));
            return Err(Error::SingularDesign(involved));
        }
        basis.push(v / norm);
    }
    Ok(())
}

fn mean_from_eta(family: Family, eta: f64) -> f64 {
    match family {
        Family::BinomialLogit => sigmoid(eta),
        Family::GammaLog => eta.exp(),
    }
}

fn unit_deviance(family: Family, y: f64, mu: f64) -> f64 {
    match family {
        Family::BinomialLogit => {
            let mu = mu.clamp(1e-300, 1.0 - 1e-16);
            let a = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
            let b = if y < 1.0 {
                (1.0 - y) * ((1.0 - y) / (1.0 - mu)).ln()
            } else {
                0.0
            };
            2.0 * (a + b)
        }
        Family::GammaLog => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
    }
}

fn deviance(family: Family, y: &[f64], w: &[f64], eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(w)
        .zip(eta.iter())
        .map(|((&y, &w), &e)| w * unit_deviance(family, y, mean_from_eta(family, e)))
        .sum()
}

/// Solves the symmetric positive (semi)definite system, adding a growing
/// ridge when the Cholesky factorization fails.
fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    let scale = a
        .diagonal()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let mut lambda = 1e-12 * scale;
    for _ in 0..12 {
        let mut reg = a.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += lambda;
        }
        if let Some(ch) = reg.cholesky() {
            return Some(ch.solve(b));
        }
        lambda *= 100.0;
    }
    None
}

pub(crate) fn fit(
    family: Family,
    input: &IrlsInput<'_>,
    stop: Stop,
    max_iter: usize,
) -> Result<IrlsFit> {
    let n = input.response.len();
    let ones = vec![1.0; n];
    let w_prior = input.weights.unwrap_or(&ones);
    let sc = standardize(input)?;
    let x = &sc.x;
    let p1 = x.ncols();
    let y = input.response;

    // Start from a smoothed response.
    let wsum: f64 = w_prior.iter().sum();
    let ybar = y.iter().zip(w_prior).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let mut beta = DVector::<f64>::zeros(p1);
    beta[0] = match family {
        Family::BinomialLogit => crate::stats::logit(ybar.clamp(1e-6, 1.0 - 1e-6)),
        Family::GammaLog => ybar.ln(),
    };
    let mut eta = x * &beta;
    let mut dev = deviance(family, y, w_prior, &eta);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        // working weights and response
        let mut xtwx = DMatrix::<f64>::zeros(p1, p1);
        let mut xtwz = DVector::<f64>::zeros(p1);
        let mut score = DVector::<f64>::zeros(p1);
        for i in 0..n {
            let mu = mean_from_eta(family, eta[i]);
            let (w, z, s) = match family {
                Family::BinomialLogit => {
                    let v = (mu * (1.0 - mu)).max(1e-300);
                    (
                        w_prior[i] * v,
                        eta[i] + (y[i] - mu) / v,
                        w_prior[i] * (y[i] - mu),
                    )
                }
                Family::GammaLog => (
                    w_prior[i],
                    eta[i] + (y[i] - mu) / mu,
                    w_prior[i] * (y[i] - mu) / mu,
                ),
            };
            let row = x.row(i);
            for a in 0..p1 {
                let xa = row[a];
                score[a] += s * xa;
                xtwz[a] += w * z * xa;
                for b in a..p1 {
                    xtwx[(a, b)] += w * xa * row[b];
                }
            }
        }
        for a in 0..p1 {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        if let Stop::Gradient(tol) = stop {
            if score.amax() < tol {
                converged = true;
                iterations = it;
                break;
            }
        }
        let Some(target) = solve_spd(xtwx, &xtwz) else {
            break;
        };
        // Step halving guards against deviance increases.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &beta + (&target - &beta) * step;
            let eta_c = x * &cand;
            let dev_c = deviance(family, y, w_prior, &eta_c);
            if dev_c.is_finite() && dev_c <= dev * (1.0 + 1e-12) + 1e-12 {
                accepted = Some((cand, eta_c, dev_c));
                break;
            }
            step *= 0.5;
        }
        let Some((b_new, eta_new, dev_new)) = accepted else {
            converged = matches!(stop, Stop::Deviance(_));
            break;
        };
        let rel = (dev - dev_new).abs() / (dev_new.abs() + 0.1);
        let moved = (&b_new - &beta).amax();
        beta = b_new;
        eta = eta_new;
        dev = dev_new;
        if let Stop::Deviance(tol) = stop {
            if rel < tol {
                converged = true;
                break;
            }
        }
        if moved == 0.0 {
            converged = true;
            break;
        }
    }

    // back to the original scale
    let mut coefficients = vec![0.0; p1];
    let mut intercept = beta[0];
    for j in 0..sc.centre.len() {
        let b = beta[j + 1] / sc.scale[j];
        coefficients[j + 1] = b;
        intercept -= b * sc.centre[j];
    }
    coefficients[0] = intercept;
    Ok(IrlsFit {
        coefficients,
        iterations,
        converged,
    })
}
