//! Experimental semivariogram construction and parametric model fitting.
//!
//! The experimental semivariogram is built point-wise: for every observation
//! and every lag window, the mean lag and mean half-squared residual
//! difference over the window are emitted as one entry. Three parametric
//! auto-correlation models (spherical, exponential, Gaussian) are then fitted
//! to the entries by bound-constrained least squares and the best one wins.
//!
//! All three models use the *practical range* convention: the shape factor 3
//! inside the exponential and Gaussian forms makes the curve approach the
//! sill near `h = a`, so the three kinds are comparable on the same range
//! parameter. The spherical model reaches the sill exactly at `h = a`.

use serde::{Deserialize, Serialize};

use crate::error::{MlioError, Result};
use crate::kriging::ObservationSet;
use crate::meta::{bounded_least_squares, LeastSquaresOptions};

/// Parametric auto-correlation model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariogramKind {
    /// `shape(r) = 1.5 r - 0.5 r^3` for `r <= 1`, constant 1 beyond.
    Spherical,
    /// `shape(r) = 1 - exp(-3 r)` (practical range).
    Exponential,
    /// `shape(r) = 1 - exp(-3 r^2)` (practical range).
    Gaussian,
}

impl VariogramKind {
    /// All model families, in the fixed fitting order.
    pub const ALL: [VariogramKind; 3] = [
        VariogramKind::Spherical,
        VariogramKind::Exponential,
        VariogramKind::Gaussian,
    ];

    /// Normalized shape function on `r = h / a`, rising from 0 toward 1.
    fn shape(self, r: f64) -> f64 {
        match self {
            VariogramKind::Spherical => {
                if r >= 1.0 {
                    1.0
                } else {
                    1.5 * r - 0.5 * r * r * r
                }
            }
            VariogramKind::Exponential => 1.0 - (-3.0 * r).exp(),
            VariogramKind::Gaussian => 1.0 - (-3.0 * r * r).exp(),
        }
    }

    /// Value of the unit-parameter model (`a = b = 1`, `c = 0`) at `h = 1`,
    /// used to normalize the sill initialization.
    fn unit_value(self) -> f64 {
        self.shape(1.0)
    }

    /// Short lowercase name used in CSV dumps.
    pub fn name(self) -> &'static str {
        match self {
            VariogramKind::Spherical => "spherical",
            VariogramKind::Exponential => "exponential",
            VariogramKind::Gaussian => "gaussian",
        }
    }
}

/// A fitted parametric semivariogram model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramFit {
    /// Winning model family.
    pub kind: VariogramKind,
    /// Range `a`: lag at which correlation is (practically) exhausted.
    pub range: f64,
    /// Sill `b`: semivariance plateau.
    pub sill: f64,
    /// Nugget `c`: jump discontinuity at the origin.
    pub nugget: f64,
    /// Sum of squared residuals of the fit against the experimental entries.
    pub sse: f64,
}

impl VariogramFit {
    /// Evaluate the fitted model at lag `h >= 0`.
    ///
    /// `gamma(0) = 0` exactly for every kind; for `h > 0` the value is
    /// `c + (b - c) * shape(h / a)`, which stays at the sill once reached.
    pub fn evaluate(&self, h: f64) -> f64 {
        debug_assert!(h >= 0.0);
        if h == 0.0 {
            return 0.0;
        }
        self.nugget + (self.sill - self.nugget) * self.kind.shape(h / self.range)
    }

    /// Copy of this fit with the nugget replaced (used by the conditioning
    /// guard). The sill is floored at the nugget so the guarded model cannot
    /// dip back toward zero at long lags.
    pub(crate) fn with_nugget(&self, nugget: f64) -> VariogramFit {
        VariogramFit {
            nugget,
            sill: self.sill.max(nugget),
            ..self.clone()
        }
    }
}

/// One `(mean lag, mean semivariance)` window entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemivarEntry {
    /// Mean lag of the pairs captured by the window.
    pub lag: f64,
    /// Mean half-squared residual difference over the window.
    pub gamma: f64,
}

/// Point-wise windowed semivariogram of a residual observation set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentalSemivariogram {
    /// Entries, at most `N * n_windows` of them; empty windows are omitted.
    pub entries: Vec<SemivarEntry>,
    /// Number of lag windows used.
    pub n_windows: usize,
    /// Maximum observed pairwise lag (upper edge of the last window).
    pub h_max: f64,
    /// Dimensionality of the observation space, bounding the range parameter.
    pub space_dim: usize,
}

/// Build the point-wise experimental semivariogram.
///
/// For each observation `i` and each of the `n_windows` equal-width lag
/// windows over `[0, h_max]`, all `j != i` whose distance to `i` falls in the
/// window contribute; the entry is the average lag and the average
/// `0.5 * (r_i - r_j)^2`. Windows are half-open `[H_n, H_{n+1})` except the
/// last, which is closed.
pub fn build_experimental(
    obs: &ObservationSet,
    residuals: &[f64],
    n_windows: usize,
) -> Result<ExperimentalSemivariogram> {
    let n = obs.len();
    if n < 2 {
        return Err(MlioError::TooFewPoints { needed: 2, got: n });
    }
    if residuals.len() != n {
        return Err(MlioError::DimensionMismatch {
            expected: n,
            got: residuals.len(),
        });
    }
    let n_windows = n_windows.max(1);

    let mut dists = vec![0.0_f64; n * n];
    let mut h_max = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(obs.location(i), obs.location(j));
            dists[i * n + j] = d;
            dists[j * n + i] = d;
            h_max = h_max.max(d);
        }
    }
    if h_max == 0.0 {
        // All locations coincide: a single degenerate entry at lag zero.
        let gamma = 0.5 * (residuals[0] - residuals[n - 1]).powi(2);
        return Ok(ExperimentalSemivariogram {
            entries: vec![SemivarEntry { lag: 0.0, gamma }],
            n_windows,
            h_max,
            space_dim: obs.dim(),
        });
    }

    let width = h_max / n_windows as f64;
    let mut entries = Vec::with_capacity(n * n_windows);
    let mut lag_sum = vec![0.0_f64; n_windows];
    let mut gam_sum = vec![0.0_f64; n_windows];
    let mut counts = vec![0usize; n_windows];
    for i in 0..n {
        lag_sum.fill(0.0);
        gam_sum.fill(0.0);
        counts.fill(0);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = dists[i * n + j];
            let w = ((d / width) as usize).min(n_windows - 1);
            lag_sum[w] += d;
            gam_sum[w] += 0.5 * (residuals[i] - residuals[j]).powi(2);
            counts[w] += 1;
        }
        for w in 0..n_windows {
            if counts[w] > 0 {
                entries.push(SemivarEntry {
                    lag: lag_sum[w] / counts[w] as f64,
                    gamma: gam_sum[w] / counts[w] as f64,
                });
            }
        }
    }

    Ok(ExperimentalSemivariogram {
        entries,
        n_windows,
        h_max,
        space_dim: obs.dim(),
    })
}

/// Previous best fits, one per model family, used to warm-start refits.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WarmStarts {
    fits: [Option<VariogramFit>; 3],
}

impl WarmStarts {
    fn get(&self, kind: VariogramKind) -> Option<&VariogramFit> {
        self.fits[kind_index(kind)].as_ref()
    }

    /// Store `fit` as the warm start for its own family.
    pub fn store(&mut self, fit: VariogramFit) {
        let slot = kind_index(fit.kind);
        self.fits[slot] = Some(fit);
    }
}

fn kind_index(kind: VariogramKind) -> usize {
    match kind {
        VariogramKind::Spherical => 0,
        VariogramKind::Exponential => 1,
        VariogramKind::Gaussian => 2,
    }
}

/// Fit all three model families to an experimental semivariogram and return
/// the one with the smallest sum of squared errors; ties prefer the earlier
/// family in [`VariogramKind::ALL`] order.
///
/// Cold initialization follows the mean-lag / normalized-mean-gamma rule with
/// a zero nugget; when `warm` holds a previous best for a family, that point
/// is used instead. If the local solver fails, the (always feasible)
/// initialization point is kept for that family.
pub fn fit_models(
    exp: &ExperimentalSemivariogram,
    warm: Option<&WarmStarts>,
) -> Result<VariogramFit> {
    if exp.entries.is_empty() {
        return Err(MlioError::TooFewPoints { needed: 1, got: 0 });
    }
    let range_cap = (exp.space_dim as f64).sqrt();
    let lags: Vec<f64> = exp.entries.iter().map(|e| e.lag).collect();
    let gammas: Vec<f64> = exp.entries.iter().map(|e| e.gamma).collect();
    let mean_lag = lags.iter().sum::<f64>() / lags.len() as f64;
    let mean_gamma = gammas.iter().sum::<f64>() / gammas.len() as f64;

    let bounds = [(RANGE_FLOOR, range_cap), (0.0, 1.0), (0.0, 1.0)];
    let mut best: Option<VariogramFit> = None;
    for kind in VariogramKind::ALL {
        let init = match warm.and_then(|w| w.get(kind)) {
            Some(prev) => [
                prev.range.clamp(RANGE_FLOOR, range_cap),
                prev.sill.clamp(0.0, 1.0),
                prev.nugget.clamp(0.0, 1.0),
            ],
            None => [
                mean_lag.clamp(RANGE_FLOOR, range_cap),
                (mean_gamma / kind.unit_value()).clamp(0.0, 1.0),
                0.0,
            ],
        };
        let residual = |p: &[f64], out: &mut [f64]| {
            let fit = VariogramFit {
                kind,
                range: p[0],
                sill: p[1],
                nugget: p[2],
                sse: 0.0,
            };
            for (k, (&h, &g)) in lags.iter().zip(gammas.iter()).enumerate() {
                out[k] = fit.evaluate(h) - g;
            }
        };
        let params = match bounded_least_squares(
            &residual,
            &bounds,
            &init,
            lags.len(),
            &LeastSquaresOptions::default(),
        ) {
            Ok(p) => p,
            // The projected solver keeps iterates feasible, so a failure can
            // only come from non-finite residuals; fall back to the
            // initialization point, which is feasible by construction.
            Err(_) => init.to_vec(),
        };
        let fit = VariogramFit {
            kind,
            range: params[0],
            sill: params[1],
            nugget: params[2],
            sse: sse_of(kind, &params, &lags, &gammas),
        };
        if best.as_ref().map_or(true, |b| fit.sse < b.sse) {
            best = Some(fit);
        }
    }
    Ok(best.expect("three fits attempted"))
}

/// Smallest admissible range; a zero range would degenerate the shape argument.
const RANGE_FLOOR: f64 = 1e-6;

fn sse_of(kind: VariogramKind, p: &[f64], lags: &[f64], gammas: &[f64]) -> f64 {
    let fit = VariogramFit {
        kind,
        range: p[0],
        sill: p[1],
        nugget: p[2],
        sse: 0.0,
    };
    lags.iter()
        .zip(gammas.iter())
        .map(|(&h, &g)| (fit.evaluate(h) - g).powi(2))
        .sum()
}

/// Write `(lag, gamma_exp, gamma_fit, kind)` rows for plotting: one row per
/// experimental entry plus `curve_samples` rows sampling the fitted curve
/// (those have an empty `gamma_exp` column).
pub fn dump_csv<W: std::io::Write>(
    writer: W,
    exp: &ExperimentalSemivariogram,
    fit: &VariogramFit,
    curve_samples: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lag", "gamma_exp", "gamma_fit", "kind"])?;
    for e in &exp.entries {
        w.write_record(&[
            format!("{}", e.lag),
            format!("{}", e.gamma),
            format!("{}", fit.evaluate(e.lag)),
            fit.kind.name().to_string(),
        ])?;
    }
    for k in 0..curve_samples {
        let h = exp.h_max * k as f64 / (curve_samples.max(2) - 1) as f64;
        w.write_record(&[
            format!("{h}"),
            String::new(),
            format!("{}", fit.evaluate(h)),
            fit.kind.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn eval_monotone_when_nugget_below_sill(
            kind_idx in 0usize..3,
            range in 1e-3f64..1.4,
            sill in 0.0f64..1.0,
            frac in 0.0f64..1.0,
            h1 in 0.0f64..1.4,
            h2 in 0.0f64..1.4,
        ) {
            let fit = VariogramFit {
                kind: VariogramKind::ALL[kind_idx],
                range,
                sill,
                nugget: sill * frac,
                sse: 0.0,
            };
            let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
            prop_assert!(fit.evaluate(lo) <= fit.evaluate(hi) + 1e-12);
        }

        #[test]
        fn experimental_permutation_invariant(
            perm_seed in 0u64..1000,
            values in proptest::collection::vec(0.0f64..1.0, 5..9),
        ) {
            let n = values.len();
            let coords: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let obs = ObservationSet::new(
                coords.iter().map(|&c| vec![c]).collect(),
                values.clone(),
            ).unwrap();
            let exp = build_experimental(&obs, &values, 4).unwrap();

            // Apply a deterministic permutation and rebuild.
            let mut order: Vec<usize> = (0..n).collect();
            let mut state = perm_seed.wrapping_add(1);
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                order.swap(i, j);
            }
            let perm_obs = ObservationSet::new(
                order.iter().map(|&i| vec![coords[i]]).collect(),
                order.iter().map(|&i| values[i]).collect(),
            ).unwrap();
            let perm_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            let perm_exp = build_experimental(&perm_obs, &perm_values, 4).unwrap();

            // Entry order is free and window averages may reassociate, so
            // compare as multisets via greedy tolerance matching.
            prop_assert_eq!(exp.entries.len(), perm_exp.entries.len());
            let mut unmatched: Vec<SemivarEntry> = perm_exp.entries.clone();
            for e in &exp.entries {
                let pos = unmatched.iter().position(|u| {
                    (u.lag - e.lag).abs() <= 1e-12 * (1.0 + e.lag.abs())
                        && (u.gamma - e.gamma).abs() <= 1e-12 * (1.0 + e.gamma.abs())
                });
                prop_assert!(pos.is_some(), "no match for entry {e:?}");
                unmatched.swap_remove(pos.unwrap());
            }
        }

        #[test]
        fn fits_respect_bounds_on_noisy_input(
            gammas in proptest::collection::vec(0.0f64..2.0, 1..12),
        ) {
            let n = gammas.len();
            let entries: Vec<SemivarEntry> = gammas.iter().enumerate().map(|(k, &g)| {
                SemivarEntry { lag: (k as f64 + 0.5) / n as f64, gamma: g }
            }).collect();
            let exp = ExperimentalSemivariogram {
                entries, n_windows: 1, h_max: 1.0, space_dim: 3,
            };
            let fit = fit_models(&exp, None).unwrap();
            prop_assert!(fit.range > 0.0 && fit.range <= 3f64.sqrt() + 1e-12);
            prop_assert!((0.0..=1.0).contains(&fit.sill));
            prop_assert!((0.0..=1.0).contains(&fit.nugget));
            prop_assert!(fit.sse >= 0.0);
        }
    }
}
