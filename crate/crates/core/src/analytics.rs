//! Global summaries of privilege scores: permutation importance, PSC
//! importance, subgroup tables and the OLS audit regression.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::DatasetTable;
use crate::error::{Error, Result};
use crate::models::check_rank;
use crate::privilege::WorldModels;
use crate::psc::{component_names, PscResult};
use crate::stats::{derive_seed, quantile};

pub const DEFAULT_PFI_REPEATS: usize = 5;

/// Mean squared change in privilege scores after permuting `feature` across
/// the test rows, averaged over `repeats` permutations. The warper and both
/// models stay fixed.
pub fn pfi(
    worlds: &WorldModels,
    test: &DatasetTable,
    reference_ps: &[f64],
    feature: &str,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::InvalidArgument(
            "permutation importance needs repeats >= 1".into(),
        ));
    }
    if reference_ps.len() != test.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "{} reference scores for {} test rows",
            reference_ps.len(),
            test.n_rows()
        )));
    }
    let col = test.require_column(feature)?;
    let rows: Vec<Vec<f64>> = test.rows().collect();
    let original = test.column(col).to_vec();
    let mut total = 0.0;
    for r in 0..repeats {
        let mut perm = original.clone();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64)));
        let mut mse = 0.0;
        let mut buf = vec![0.0; test.n_cols()];
        for (i, row) in rows.iter().enumerate() {
            buf.copy_from_slice(row);
            buf[col] = perm[i];
            let d = worlds.estimate_ps(&buf).delta_hat - reference_ps[i];
            mse += d * d;
        }
        total += mse / rows.len() as f64;
    }
    Ok(total / repeats as f64)
}

/// Mean absolute value of each component across results, in
/// [`component_names`] order.
pub fn psc_importance(results: &[PscResult]) -> Result<Vec<f64>> {
    let first = results
        .first()
        .ok_or_else(|| Error::Empty("no PSC results".into()))?;
    let m = first.components().len();
    let mut acc = vec![0.0; m];
    for r in results {
        let c = r.components();
        if c.len() != m {
            return Err(Error::InvalidArgument(
                "PSC results with different arrow counts".into(),
            ));
        }
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v.abs();
        }
    }
    Ok(acc.into_iter().map(|a| a / results.len() as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub n: usize,
    pub alpha: f64,
    pub components: Vec<ComponentSummary>,
}

impl SubgroupSummary {
    pub fn component(&self, name: &str) -> Option<&ComponentSummary> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,mean,lower,upper,importance\n");
        for c in &self.components {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6}",
                c.name, c.mean, c.lower, c.upper, c.importance
            );
        }
        s
    }
}

/// Mean, type-7 quantiles at (α, 1-α) and importance of every component over
/// the results selected by `filter`.
pub fn subgroup_summary(
    results: &[PscResult],
    filter: impl Fn(usize, &PscResult) -> bool,
    alpha: f64,
) -> Result<SubgroupSummary> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie in (0, 0.5), got {alpha}"
        )));
    }
    let group: Vec<PscResult> = results
        .iter()
        .enumerate()
        .filter(|(i, r)| filter(*i, r))
        .map(|(_, r)| r.clone())
        .collect();
    if group.is_empty() {
        return Err(Error::Empty("subgroup has no members".into()));
    }
    let importance = psc_importance(&group)?;
    let names = component_names(group[0].k());
    let comps: Vec<Vec<f64>> = group.iter().map(PscResult::components).collect();
    let components = names
        .into_iter()
        .enumerate()
        .map(|(c, name)| {
            let v: Vec<f64> = comps.iter().map(|x| x[c]).collect();
            ComponentSummary {
                name,
                mean: v.iter().sum::<f64>() / v.len() as f64,
                lower: quantile(&v, alpha),
                upper: quantile(&v, 1.0 - alpha),
                importance: importance[c],
            }
        })
        .collect();
    Ok(SubgroupSummary {
        n: group.len(),
        alpha,
        components,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// `None` when the residual variance is zero.
    pub t_value: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    pub df: usize,
    pub residual_variance: f64,
}

impl RegressionSummary {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Plain-text table with four decimals.
    pub fn format_table(&self) -> String {
        let width = self
            .coefficients
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(0)
            .max(11);
        let mut s = format!(
            "{:<width$} {:>12} {:>12} {:>10} {:>10}\n",
            "", "Estimate", "Std. Error", "t value", "Pr(>|t|)"
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        for c in &self.coefficients {
            let _ = writeln!(
                s,
                "{:<width$} {:>12.4} {:>12.4} {:>10} {:>10}",
                c.name,
                c.estimate,
                c.std_error,
                opt(c.t_value),
                opt(c.p_value)
            );
        }
        let _ = writeln!(
            s,
            "n = {}, residual df = {}, residual variance = {:.4}",
            self.n, self.df, self.residual_variance
        );
        s
    }
}

/// OLS of `ps` on an intercept and `regressors`, solved by QR, with
/// classical standard errors and two-sided Student-t p-values.
pub fn regress_ps(
    test: &DatasetTable,
    ps: &[f64],
    regressors: &[String],
) -> Result<RegressionSummary> {
    let cols = regressors
        .iter()
        .map(|r| test.column_by_name(r))
        .collect::<Result<Vec<_>>>()?;
    ols(ps, &cols, regressors)
}

pub fn ols(y: &[f64], columns: &[&[f64]], names: &[String]) -> Result<RegressionSummary> {
    let n = y.len();
    let p = columns.len() + 1;
    if n <= p {
        return Err(Error::InvalidArgument(format!(
            "regression needs more rows ({n}) than parameters ({p})"
        )));
    }
    let mut x = DMatrix::<f64>::zeros(n, p);
    x.column_mut(0).fill(1.0);
    for (j, c) in columns.iter().enumerate() {
        if c.len() != n {
            return Err(Error::InvalidArgument(format!(
                "regressor `{}` has {} values for {n} rows",
                names[j],
                c.len()
            )));
        }
        for i in 0..n {
            x[(i, j + 1)] = c[i];
        }
    }
    check_rank(&x, names)?;
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign(names.to_vec()))?;
    let resid = &yv - &x * &beta;
    let df = n - p;
    let mut rss = resid.norm_squared();
    // Residuals at rounding level mean an exact fit.
    if rss <= (64.0 * f64::EPSILON).powi(2) * yv.norm_squared() {
        rss = 0.0;
    }
    let sigma2 = rss / df as f64;
    // (R'R)^-1 = R^-1 R^-T
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::SingularDesign(names.to_vec()))?;
    let cov_unscaled = &rinv * rinv.transpose();
    let tdist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Fit(e.to_string()))?;
    let mut coefficients = Vec::with_capacity(p);
    for j in 0..p {
        let se = (sigma2 * cov_unscaled[(j, j)]).sqrt();
        let (t, pv) = if sigma2 > 0.0 {
            let t = beta[j] / se;
            (Some(t), Some(2.0 * tdist.sf(t.abs())))
        } else {
            (None, None)
        };
        coefficients.push(Coefficient {
            name: if j == 0 {
                "(Intercept)".into()
            } else {
                names[j - 1].clone()
            },
            estimate: beta[j],
            std_error: se,
            t_value: t,
            p_value: pv,
        });
    }
    Ok(RegressionSummary {
        coefficients,
        n,
        df,
        residual_variance: sigma2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psc::Route;

    fn result(ps: f64, dg: f64, dx: f64, gamma: Vec<f64>) -> PscResult {
        PscResult {
            delta0: dg + dx,
            gamma,
            delta_g: dg,
            delta_x: dx,
            ps,
            pred_real: 0.5,
            pred_warped: 0.5 - ps,
            route: Route::Real,
        }
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let s = ols(&y, &[&x], &["x".into()]).unwrap();
        assert!((s.coefficients[0].estimate - 1.0).abs() < 1e-10);
        assert!((s.coefficients[1].estimate - 2.0).abs() < 1e-10);
        assert_eq!(s.residual_variance, 0.0);
        assert!(s.coefficients[1].t_value.is_none());
    }

    #[test]
    fn constant_response() {
        let x: Vec<f64> = (0..10).map(|v| (v as f64).sqrt()).collect();
        let y = vec![0.3; 10];
        let s = ols(&y, &[&x], &["x".into()]).unwrap();
        assert!((s.coefficients[0].estimate - 0.3).abs() < 1e-12);
        assert!(s.coefficients[1].estimate.abs() < 1e-12);
        assert_eq!(s.residual_variance, 0.0);
        assert!(s.coefficients[1].t_value.is_none());
        assert!(s.format_table().contains("NA"));
    }

    #[test]
    fn collinear_regressors_rejected() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let z: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let err = ols(&y, &[&x, &z], &["x".into(), "z".into()]).unwrap_err();
        assert!(matches!(err, Error::SingularDesign(c) if c.contains(&"z".to_string())));
    }

    #[test]
    fn importance_and_summary() {
        let rs = vec![
            result(-0.5, 0.1, -0.4, vec![-0.2, 0.0]),
            result(0.1, 0.1, 0.0, vec![0.2, -0.2]),
        ];
        let imp = psc_importance(&rs).unwrap();
        assert_eq!(imp, vec![0.3, 0.1, 0.2, 0.2, 0.1]);
        let s = subgroup_summary(&rs, |i, _| i == 0, 0.05).unwrap();
        assert_eq!(s.n, 1);
        assert_eq!(s.component("ps").unwrap().mean, -0.5);
        assert_eq!(s.component("ps").unwrap().lower, -0.5);
        assert_eq!(s.component("gamma_1").unwrap().importance, 0.2);
        assert!(subgroup_summary(&rs, |_, _| false, 0.05).is_err());
        assert!(psc_importance(&[]).is_err());
    }
}
