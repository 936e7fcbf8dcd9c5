//! Small numerical helpers shared across modules.

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF (Acklam's rational approximation refined by
/// one Halley step; about 1e-15 relative accuracy).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "normal quantile needs p in (0,1), got {p}"
    );
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let lo = 0.02425;
    let x = if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// CDF of Gamma(shape, scale = 1).
pub fn gamma_cdf(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(shape, x)
    }
}

fn gamma_sf(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(shape, x)
    }
}

fn ln_gamma_pdf(shape: f64, x: f64) -> f64 {
    (shape - 1.0) * x.ln() - x - ln_gamma(shape)
}

/// Quantile of Gamma(shape, scale = 1): Newton iterations on the
/// regularized incomplete gamma function inside a shrinking bracket.
pub fn gamma_quantile(shape: f64, p: f64) -> f64 {
    assert!(shape > 0.0, "gamma shape must be positive");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // Work on whichever tail is smaller for precision.
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    let tail = |x: f64| {
        if upper {
            gamma_sf(shape, x)
        } else {
            gamma_cdf(shape, x)
        }
    };

    // Wilson-Hilferty start.
    let z = normal_quantile(p);
    let c = 1.0 / (9.0 * shape);
    let mut x = shape * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x > 0.0 && x.is_finite()) {
        // small-shape lower tail: P(x) ~ x^a / Gamma(a+1)
        x = (p * (ln_gamma(shape + 1.0)).exp())
            .powf(1.0 / shape)
            .max(1e-300);
    }

    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let f = tail(x) - target;
        // In the upper tail the function decreases with x.
        let below = if upper { f > 0.0 } else { f < 0.0 };
        if below {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        if f == 0.0 {
            break;
        }
        let dens = ln_gamma_pdf(shape, x).exp();
        let step = if upper { -f / dens } else { f / dens };
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                x * 2.0
            };
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) {
            x = next;
            break;
        }
        x = next;
    }
    x
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_var(xs: &[f64]) -> f64 {
    sample_cov(xs, xs)
}

pub fn sample_cov(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1) as f64
}

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&p), "quantile level {p} outside [0,1]");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mixes a base seed with a tag (splitmix64 finalizer) so sub-tasks get
/// unrelated but reproducible seeds.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        ^ tag
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles_of_one_to_ten() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        // h = 9p; q = x[floor h] + frac * (x[floor h + 1] - x[floor h])
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 10.0);
        assert!((quantile(&xs, 0.5) - 5.5).abs() < 1e-15);
        assert!((quantile(&xs, 0.05) - 1.45).abs() < 1e-12);
        assert!((quantile(&xs, 0.95) - 9.55).abs() < 1e-12);
        assert!((quantile(&xs, 0.25) - 3.25).abs() < 1e-12);
    }

    #[test]
    fn normal_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-11);
        for p in [1e-10, 0.001, 0.025, 0.3, 0.5, 0.9, 0.999] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-13 * p.max(1e-3));
        }
    }

    #[test]
    fn gamma_quantile_inverts_cdf() {
        for shape in [0.3, 1.0 / 0.74, 1.0, 9.76, 10.0, 150.0] {
            for p in [1e-8, 1e-3, 0.1, 0.5, 0.9, 0.999, 1.0 - 1e-9] {
                let x = gamma_quantile(shape, p);
                let back = gamma_cdf(shape, x);
                let err = if p > 0.5 {
                    ((1.0 - back) - (1.0 - p)).abs() / (1.0 - p)
                } else {
                    (back - p).abs() / p
                };
                assert!(err < 1e-9, "shape {shape} p {p}: x {x} back {back}");
            }
        }
    }

    #[test]
    fn exponential_quantile_closed_form() {
        for p in [0.01, 0.5, 0.99] {
            let x = gamma_quantile(1.0, p);
            assert!((x - (-(1.0 - p).ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn moments() {
        let x = [1.0, 2.0, 4.0];
        let y = [2.0, 1.0, 0.0];
        assert!((sample_var(&x) - 7.0 / 3.0).abs() < 1e-15);
        assert!((sample_cov(&x, &y) - (-1.5)).abs() < 1e-15);
    }
}
