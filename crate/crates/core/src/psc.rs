//! Privilege score contributions: Shapley values over privilege arrows plus
//! the intercept split, and the feature-level Shapley alternative.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dag::ValidatedDag;
use crate::dataset::DatasetTable;
use crate::error::{Error, Result};
use crate::privilege::{bootstrap_pipelines, BootstrapConfig, BootstrapInterval, WorldModels};
use crate::stats::derive_seed;
use crate::warp::Coalition;

/// Largest player count for exact enumeration.
pub const MAX_EXACT_PLAYERS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// Contributions measured with the real-world model.
    #[default]
    Real,
    /// Contributions measured with the warped-world model.
    Warped,
}

impl std::str::FromStr for Route {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "real" => Ok(Route::Real),
            "warped" => Ok(Route::Warped),
            other => Err(Error::InvalidArgument(format!(
                "unknown route `{other}` (expected real or warped)"
            ))),
        }
    }
}

/// Which training mean of the warped-world model centres the intercepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeanConvention {
    /// Both models averaged over the real training features.
    #[default]
    RealFeatures,
    /// The warped-world model averaged over the warped training features.
    WarpedFeatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PscOptions {
    pub route: Route,
    pub means: MeanConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PscResult {
    pub gamma: Vec<f64>,
    pub delta_g: f64,
    /// Individual intercept (at x̃ on the real route, at x on the warped one).
    pub delta_x: f64,
    pub delta0: f64,
    pub ps: f64,
    pub pred_real: f64,
    pub pred_warped: f64,
    pub route: Route,
}

impl PscResult {
    pub fn k(&self) -> usize {
        self.gamma.len()
    }

    /// Components in reporting order: ps, delta_g, delta_x, gamma_1..gamma_k.
    pub fn components(&self) -> Vec<f64> {
        let mut v = vec![self.ps, self.delta_g, self.delta_x];
        v.extend_from_slice(&self.gamma);
        v
    }
}

pub fn component_names(k: usize) -> Vec<String> {
    let mut v = vec![
        "ps".to_string(),
        "delta_g".to_string(),
        "delta_x".to_string(),
    ];
    v.extend((1..=k).map(|j| format!("gamma_{j}")));
    v
}

fn check_k(k: usize) -> Result<()> {
    if k > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyPlayers {
            k,
            max: MAX_EXACT_PLAYERS,
        });
    }
    Ok(())
}

fn value_table(v: &dyn Fn(Coalition) -> f64, k: usize) -> Vec<f64> {
    (0..1u32 << k).map(|m| v(Coalition(m))).collect()
}

/// Shapley values by averaging marginal contributions over all k!
/// orderings of the players.
pub fn shapley_order(v: impl Fn(Coalition) -> f64, k: usize) -> Result<Vec<f64>> {
    check_k(k)?;
    let table = value_table(&v, k);
    Ok(order_from_table(&table, k))
}

fn order_from_table(table: &[f64], k: usize) -> Vec<f64> {
    let mut gamma = vec![0.0; k];
    if k == 0 {
        return gamma;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut count = 0usize;
    loop {
        let mut s = 0u32;
        for &j in &perm {
            let next = s | (1 << j);
            gamma[j] += table[next as usize] - table[s as usize];
            s = next;
        }
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    for g in &mut gamma {
        *g /= count as f64;
    }
    gamma
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Shapley values from the subset formula with weights |S|!(k-|S|-1)!/k!.
pub fn shapley_subset(v: impl Fn(Coalition) -> f64, k: usize) -> Result<Vec<f64>> {
    check_k(k)?;
    let table = value_table(&v, k);
    Ok(subset_from_table(&table, k))
}

fn subset_from_table(table: &[f64], k: usize) -> Vec<f64> {
    let kf = factorial(k);
    let weights: Vec<f64> = (0..k)
        .map(|s| factorial(s) * factorial(k - s - 1) / kf)
        .collect();
    (0..k)
        .map(|j| {
            let mut g = 0.0;
            for m in 0..(1u32 << k) {
                if m & (1 << j) != 0 {
                    continue;
                }
                let s = m.count_ones() as usize;
                g += weights[s] * (table[(m | (1 << j)) as usize] - table[m as usize]);
            }
            g
        })
        .collect()
}

/// Monte-Carlo Shapley values from `samples` uniformly drawn orderings; for
/// player counts beyond exact enumeration.
pub fn shapley_sampled(
    mut v: impl FnMut(Coalition) -> f64,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if k > Coalition::MAX_PLAYERS {
        return Err(Error::TooManyPlayers {
            k,
            max: Coalition::MAX_PLAYERS,
        });
    }
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "sampling needs at least one permutation".into(),
        ));
    }
    let mut gamma = vec![0.0; k];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..k).collect();
    let mut cache = std::collections::HashMap::new();
    let mut val = |s: Coalition| *cache.entry(s).or_insert_with(|| v(s));
    for _ in 0..samples {
        perm.shuffle(&mut rng);
        let mut s = Coalition::empty();
        let mut prev = val(s);
        for &j in &perm {
            s = s.with(j);
            let cur = val(s);
            gamma[j] += cur - prev;
            prev = cur;
        }
    }
    for g in &mut gamma {
        *g /= samples as f64;
    }
    Ok(gamma)
}

/// v(S) = π̂(x) - π̂(x_S).
pub fn value_v(worlds: &WorldModels, row: &[f64], s: Coalition) -> f64 {
    worlds.real_model.predict(row) - worlds.real_model.predict(&worlds.warper.warp_row(row, s))
}

/// ṽ(S) = φ̂(x) - φ̂(x_S).
pub fn value_vtilde(worlds: &WorldModels, row: &[f64], s: Coalition) -> f64 {
    worlds.warped_model.predict(row) - worlds.warped_model.predict(&worlds.warper.warp_row(row, s))
}

/// Decomposes the privilege score of one record.
pub fn psc(worlds: &WorldModels, row: &[f64], opts: PscOptions) -> Result<PscResult> {
    let k = worlds.k();
    check_k(k)?;
    let model = match opts.route {
        Route::Real => &worlds.real_model,
        Route::Warped => &worlds.warped_model,
    };
    // prediction at every coalition's warped record
    let mut buf = row.to_vec();
    let preds: Vec<f64> = (0..1u32 << k)
        .map(|m| {
            buf.copy_from_slice(row);
            worlds.warper.warp_into(row, Coalition(m), &mut buf);
            model.predict(&buf)
        })
        .collect();
    let full = (1usize << k) - 1;
    let base = preds[0];
    let table: Vec<f64> = preds.iter().map(|p| base - p).collect();
    let gamma = order_from_table(&table, k);

    let warped_row = worlds.warper.warp_row(row, worlds.full_coalition());
    let pred_real = worlds.real_model.predict(row);
    let pred_warped = worlds.warped_model.predict(&warped_row);
    let mean_real = worlds.train_mean_real;
    let mean_warped = match opts.means {
        MeanConvention::RealFeatures => worlds.train_mean_warped,
        MeanConvention::WarpedFeatures => worlds.train_mean_warped_at_warped,
    };
    let delta_g = mean_real - mean_warped;
    let (a, b) = match opts.route {
        // π̂(x̃), φ̂(x̃)
        Route::Real => (preds[full], pred_warped),
        // π̂(x), φ̂(x)
        Route::Warped => (pred_real, preds[0]),
    };
    let delta_x = (a - mean_real) - (b - mean_warped);
    Ok(PscResult {
        gamma,
        delta_g,
        delta_x,
        delta0: a - b,
        ps: pred_real - pred_warped,
        pred_real,
        pred_warped,
        route: opts.route,
    })
}

/// Per-component intervals for one record; `components` follow
/// [`component_names`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PscIntervals {
    pub components: Vec<BootstrapInterval>,
}

impl PscIntervals {
    pub fn ps(&self) -> &BootstrapInterval {
        &self.components[0]
    }
    pub fn delta_g(&self) -> &BootstrapInterval {
        &self.components[1]
    }
    pub fn delta_x(&self) -> &BootstrapInterval {
        &self.components[2]
    }
    pub fn gamma(&self, j: usize) -> &BootstrapInterval {
        &self.components[3 + j]
    }
}

/// Builds per-component intervals from replicate results (one inner vector
/// per replicate, one entry per record).
pub fn intervals_from_replicates(
    reps: &[Vec<PscResult>],
    n_rows: usize,
    alpha: f64,
) -> Result<Vec<PscIntervals>> {
    (0..n_rows)
        .map(|i| {
            let n_comp = reps[0][i].components().len();
            let comps: Vec<Vec<f64>> = reps.iter().map(|r| r[i].components()).collect();
            let components = (0..n_comp)
                .map(|c| {
                    BootstrapInterval::from_replicates(comps.iter().map(|v| v[c]).collect(), alpha)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PscIntervals { components })
        })
        .collect()
}

/// Bootstrap intervals for every component of every record in `rows`; the
/// training means are recomputed inside each replicate.
pub fn bootstrap_psc(
    train: &DatasetTable,
    dag: &ValidatedDag,
    rows: &[Vec<f64>],
    reference: &WorldModels,
    cfg: &BootstrapConfig,
    opts: PscOptions,
) -> Result<Vec<PscIntervals>> {
    check_k(reference.k())?;
    let reps = bootstrap_pipelines(train, dag, reference, cfg, |w| {
        rows.iter()
            .map(|r| psc(w, r, opts).expect("player count checked"))
            .collect::<Vec<_>>()
    })?;
    intervals_from_replicates(&reps, rows.len(), cfg.alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardShapleyResult {
    pub eta0: f64,
    /// One value per model feature.
    pub eta: Vec<f64>,
    pub feature_names: Vec<String>,
}

/// Interventional Shapley values of `f` at `x` over the players `cols`
/// (record positions), with absent players filled from background rows.
/// Returns the background mean of `f` and the per-player values.
pub fn interventional_shapley(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    background: &[Vec<f64>],
    cols: &[usize],
    samples: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if background.is_empty() {
        return Err(Error::Empty(
            "standard Shapley needs a background sample".into(),
        ));
    }
    let p = cols.len();
    let mut buf = x.to_vec();
    let mut value = |s: Coalition| {
        let mut acc = 0.0;
        for b in background {
            buf.copy_from_slice(b);
            for (j, &c) in cols.iter().enumerate() {
                if s.contains(j) {
                    buf[c] = x[c];
                }
            }
            acc += f(&buf);
        }
        acc / background.len() as f64
    };
    if p <= MAX_EXACT_PLAYERS {
        let table: Vec<f64> = (0..1u32 << p).map(|m| value(Coalition(m))).collect();
        Ok((table[0], subset_from_table(&table, p)))
    } else {
        let base = value(Coalition::empty());
        let phi = shapley_sampled(value, p, samples, seed)?;
        Ok((base, phi))
    }
}

/// Feature-level alternative: η_j = β_j - β̃_j, where β explains π̂ at x
/// against the real background and β̃ explains φ̂ at x̃ against the warped
/// background. η_0 is the difference of the background means.
pub fn standard_shapley(
    worlds: &WorldModels,
    row: &[f64],
    background: &DatasetTable,
    samples: usize,
    seed: u64,
) -> Result<StandardShapleyResult> {
    worlds.warper.check_schema(background)?;
    let names = worlds.real_model.feature_names().to_vec();
    let cols = names
        .iter()
        .map(|n| background.require_column(n))
        .collect::<Result<Vec<_>>>()?;
    let full = worlds.full_coalition();
    let bg_real: Vec<Vec<f64>> = background.rows().collect();
    let bg_warped: Vec<Vec<f64>> = bg_real
        .iter()
        .map(|r| worlds.warper.warp_row(r, full))
        .collect();
    let x_warped = worlds.warper.warp_row(row, full);
    let pi = |r: &[f64]| worlds.real_model.predict(r);
    let phi = |r: &[f64]| worlds.warped_model.predict(r);
    let (base_real, beta) =
        interventional_shapley(&pi, row, &bg_real, &cols, samples, derive_seed(seed, 0))?;
    let (base_warped, beta_w) = interventional_shapley(
        &phi,
        &x_warped,
        &bg_warped,
        &cols,
        samples,
        derive_seed(seed, 1),
    )?;
    Ok(StandardShapleyResult {
        eta0: base_real - base_warped,
        eta: beta.iter().zip(&beta_w).map(|(a, b)| a - b).collect(),
        feature_names: names,
    })
}

/// Uniform seeded subsample of at most `cap` training rows.
pub fn background_sample(train: &DatasetTable, cap: usize, seed: u64) -> DatasetTable {
    let n = train.n_rows();
    if n <= cap {
        return train.clone();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(cap);
    idx.sort_unstable();
    train.select_rows(&idx)
}

pub const DEFAULT_BACKGROUND_ROWS: usize = 500;
