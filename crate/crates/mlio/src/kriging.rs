//! Ordinary Kriging on scalar residual observations.
//!
//! The prediction at a query is the weighted sum of the observations, with
//! weights solving the bordered linear system
//!
//! ```text
//! [Γ  1] [w]   [γ₀]
//! [1ᵀ 0] [λ] = [ 1 ]
//! ```
//!
//! where `Γ` holds pairwise semivariances under a fitted auto-correlation
//! model, the border enforces the unbiasedness constraint `Σw = 1`, and the
//! prediction variance is `wᵀγ₀ + λ`. The factorization of the bordered
//! matrix is computed once per observation set and reused by every
//! prediction; batched entry points solve many right-hand sides against it
//! at once.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MlioError, Result};
use crate::variogram::{euclidean, VariogramFit};

/// Condition-number threshold above which the nugget guard engages.
pub const CONDITION_GUARD: f64 = 1e8;
/// Nugget imposed by the guard.
pub const GUARD_NUGGET: f64 = 1e-8;
/// Round-off tolerance for negative prediction variances.
pub const VARIANCE_TOLERANCE: f64 = 1e-12;

/// Scattered locations in the unit hypercube with scalar residual values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationSet {
    dim: usize,
    locations: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl ObservationSet {
    /// Build an observation set of `N >= 2` normalized locations.
    pub fn new(locations: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if locations.len() < 2 {
            return Err(MlioError::TooFewPoints {
                needed: 2,
                got: locations.len(),
            });
        }
        if locations.len() != values.len() {
            return Err(MlioError::DimensionMismatch {
                expected: locations.len(),
                got: values.len(),
            });
        }
        let dim = locations[0].len();
        for loc in &locations {
            if loc.len() != dim {
                return Err(MlioError::DimensionMismatch {
                    expected: dim,
                    got: loc.len(),
                });
            }
            for (i, &c) in loc.iter().enumerate() {
                if !(0.0..=1.0).contains(&c) {
                    return Err(MlioError::OutOfDomain { index: i, value: c });
                }
            }
        }
        Ok(ObservationSet {
            dim,
            locations,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn location(&self, i: usize) -> &[f64] {
        &self.locations[i]
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Semivariance kernel backing a Kriging system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// A fitted parametric model (the production path).
    Fitted(VariogramFit),
    /// Unbounded linear semivariance `γ(h) = slope · h`; a reference kernel
    /// for validation against hand-solved systems.
    Linear { slope: f64 },
}

impl Kernel {
    pub fn gamma(&self, h: f64) -> f64 {
        match self {
            Kernel::Fitted(fit) => fit.evaluate(h),
            Kernel::Linear { slope } => slope * h,
        }
    }

    fn nugget(&self) -> Option<f64> {
        match self {
            Kernel::Fitted(fit) => Some(fit.nugget),
            Kernel::Linear { .. } => None,
        }
    }

    fn with_nugget(&self, nugget: f64) -> Kernel {
        match self {
            Kernel::Fitted(fit) => Kernel::Fitted(fit.with_nugget(nugget)),
            other => other.clone(),
        }
    }
}

/// Mean and variance of a Kriging prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    /// Non-negative after round-off clamping.
    pub variance: f64,
}

/// An assembled, factorized ordinary-Kriging system.
///
/// Immutable after assembly; safe to share across threads for concurrent
/// predictions.
pub struct KrigingSystem {
    obs: ObservationSet,
    kernel: Kernel,
    alpha: Mat<f64>,
    lu: PartialPivLu<f64>,
    /// `α⁻¹ [z; 0]`; lets a mean be taken as `βᵀζ` in O(N) per query.
    zeta: Vec<f64>,
    condition: f64,
    nugget_guarded: bool,
}

impl std::fmt::Debug for KrigingSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KrigingSystem")
            .field("n", &self.obs.len())
            .field("dim", &self.obs.dim())
            .field("kernel", &self.kernel)
            .field("condition", &self.condition)
            .field("nugget_guarded", &self.nugget_guarded)
            .finish()
    }
}

impl KrigingSystem {
    /// Assemble and factorize the bordered system for a fitted model.
    ///
    /// If the estimated 1-norm condition number exceeds [`CONDITION_GUARD`],
    /// the system is rebuilt once with the nugget raised to
    /// [`GUARD_NUGGET`]. Bit-identical duplicate locations keep the matrix
    /// exactly singular either way and surface as
    /// [`MlioError::SingularSystem`].
    pub fn assemble(obs: ObservationSet, fit: &VariogramFit) -> Result<Self> {
        Self::assemble_kernel(obs, Kernel::Fitted(fit.clone()))
    }

    /// Assemble against the linear reference kernel `γ(h) = slope · h`.
    pub fn assemble_linear(obs: ObservationSet, slope: f64) -> Result<Self> {
        Self::assemble_kernel(obs, Kernel::Linear { slope })
    }

    /// Assemble against an arbitrary kernel.
    pub fn assemble_kernel(obs: ObservationSet, kernel: Kernel) -> Result<Self> {
        match Self::try_build(&obs, &kernel, false) {
            Ok(sys) => Ok(sys),
            Err(BuildFailure::IllConditioned) => {
                let guarded = kernel
                    .nugget()
                    .filter(|&c| c < GUARD_NUGGET)
                    .map(|_| kernel.with_nugget(GUARD_NUGGET));
                match guarded {
                    Some(k) => match Self::try_build(&obs, &k, true) {
                        Ok(sys) => Ok(sys),
                        Err(_) => Err(MlioError::SingularSystem { n: obs.len() }),
                    },
                    None => Err(MlioError::SingularSystem { n: obs.len() }),
                }
            }
        }
    }

    fn try_build(
        obs: &ObservationSet,
        kernel: &Kernel,
        guarded: bool,
    ) -> std::result::Result<Self, BuildFailure> {
        let n = obs.len();
        let m = n + 1;
        let mut alpha = Mat::<f64>::zeros(m, m);
        for i in 0..n {
            alpha[(i, n)] = 1.0;
            alpha[(n, i)] = 1.0;
            for j in (i + 1)..n {
                let g = kernel.gamma(euclidean(obs.location(i), obs.location(j)));
                alpha[(i, j)] = g;
                alpha[(j, i)] = g;
            }
        }
        let lu = PartialPivLu::new(alpha.as_ref());

        let condition = one_norm(&alpha) * inverse_one_norm_estimate(&lu, m);
        if !condition.is_finite() {
            return Err(BuildFailure::IllConditioned);
        }
        // A finite but absurd estimate is indistinguishable from singular.
        if condition > 1e15 {
            return Err(BuildFailure::IllConditioned);
        }
        if !guarded && condition > CONDITION_GUARD && kernel.nugget().is_some_and(|c| c < GUARD_NUGGET)
        {
            return Err(BuildFailure::IllConditioned);
        }

        let mut rhs = Mat::<f64>::zeros(m, 1);
        for i in 0..n {
            rhs[(i, 0)] = obs.value(i);
        }
        let zeta_mat = lu.solve(rhs.as_ref());
        let zeta: Vec<f64> = (0..m).map(|i| zeta_mat[(i, 0)]).collect();
        if zeta.iter().any(|v| !v.is_finite()) {
            return Err(BuildFailure::IllConditioned);
        }

        Ok(KrigingSystem {
            obs: obs.clone(),
            kernel: kernel.clone(),
            alpha,
            lu,
            zeta,
            condition,
            nugget_guarded: guarded,
        })
    }

    pub fn n(&self) -> usize {
        self.obs.len()
    }

    pub fn dim(&self) -> usize {
        self.obs.dim()
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Estimated 1-norm condition number of the bordered matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Whether the conditioning guard replaced the nugget.
    pub fn nugget_guarded(&self) -> bool {
        self.nugget_guarded
    }

    #[cfg(test)]
    pub(crate) fn alpha_entry(&self, i: usize, j: usize) -> f64 {
        self.alpha[(i, j)]
    }

    /// Semivariances from every observation to `query`.
    pub fn gamma_to(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.obs.dim() {
            return Err(MlioError::DimensionMismatch {
                expected: self.obs.dim(),
                got: query.len(),
            });
        }
        Ok(self
            .obs
            .locations()
            .iter()
            .map(|loc| self.kernel.gamma(euclidean(loc, query)))
            .collect())
    }

    /// Kriging weights and Lagrange multiplier for a query.
    pub fn weights(&self, query: &[f64]) -> Result<(Vec<f64>, f64)> {
        let gamma = self.gamma_to(query)?;
        let xi = self.solve_refined(&gamma);
        let n = self.n();
        Ok((xi[..n].to_vec(), xi[n]))
    }

    /// Predict mean and variance at a query location.
    ///
    /// The solve against the cached factorization gets one step of iterative
    /// refinement, so weight sums and interpolated values hold to tight
    /// tolerances. Variances in `(-1e-12, 0)` clamp to zero; anything more
    /// negative is reported as model breakage.
    pub fn predict(&self, query: &[f64]) -> Result<Prediction> {
        let gamma = self.gamma_to(query)?;
        self.predict_from_gamma(&gamma)
    }

    /// [`KrigingSystem::predict`] on a precomputed semivariance vector.
    pub fn predict_from_gamma(&self, gamma: &[f64]) -> Result<Prediction> {
        let n = self.n();
        let xi = self.solve_refined(gamma);
        let mut mean = 0.0;
        for i in 0..n {
            mean += xi[i] * self.obs.value(i);
        }
        let mut variance = xi[n];
        for i in 0..n {
            variance += xi[i] * gamma[i];
        }
        if variance < -VARIANCE_TOLERANCE {
            return Err(MlioError::NegativeVariance { value: variance });
        }
        Ok(Prediction {
            mean,
            variance: variance.max(0.0),
        })
    }

    /// Prediction mean only, in O(N) via `βᵀζ`; no variance solve.
    pub fn mean_from_gamma(&self, gamma: &[f64]) -> f64 {
        let n = self.n();
        let mut mean = self.zeta[n];
        for i in 0..n {
            mean += gamma[i] * self.zeta[i];
        }
        mean
    }

    /// Predict at many queries with one batched solve.
    pub fn predict_batch(&self, queries: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        let n = self.n();
        let m = queries.len();
        if m == 0 {
            return Ok(Vec::new());
        }
        let mut b = Mat::<f64>::zeros(n + 1, m);
        for (j, q) in queries.iter().enumerate() {
            let gamma = self.gamma_to(q)?;
            for i in 0..n {
                b[(i, j)] = gamma[i];
            }
            b[(n, j)] = 1.0;
        }
        let x = self.lu.solve(b.as_ref());
        let mut out = Vec::with_capacity(m);
        for j in 0..m {
            let mut mean = 0.0;
            let mut variance = x[(n, j)];
            for i in 0..n {
                mean += x[(i, j)] * self.obs.value(i);
                variance += x[(i, j)] * b[(i, j)];
            }
            if variance < -VARIANCE_TOLERANCE {
                return Err(MlioError::NegativeVariance { value: variance });
            }
            out.push(Prediction {
                mean,
                variance: variance.max(0.0),
            });
        }
        Ok(out)
    }

    /// Variances at many queries given their semivariance vectors packed
    /// column-major into `gammas` (length `n * m`). Negative round-off values
    /// clamp to zero; this path feeds acquisition scans where only the
    /// maximum matters.
    pub fn variances_from_gammas(&self, gammas: &[f64], m: usize) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(gammas.len(), n * m);
        if m == 0 {
            return Vec::new();
        }
        let mut b = Mat::<f64>::zeros(n + 1, m);
        for j in 0..m {
            for i in 0..n {
                b[(i, j)] = gammas[j * n + i];
            }
            b[(n, j)] = 1.0;
        }
        let x = self.lu.solve(b.as_ref());
        (0..m)
            .map(|j| {
                let mut v = x[(n, j)];
                for i in 0..n {
                    v += x[(i, j)] * b[(i, j)];
                }
                v.max(0.0)
            })
            .collect()
    }

    /// Means at many queries given packed semivariance vectors; O(N) each.
    pub fn means_from_gammas(&self, gammas: &[f64], m: usize) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(gammas.len(), n * m);
        (0..m)
            .map(|j| self.mean_from_gamma(&gammas[j * n..(j + 1) * n]))
            .collect()
    }

    fn solve_refined(&self, gamma: &[f64]) -> Vec<f64> {
        let n = self.n();
        let m = n + 1;
        let mut rhs = Mat::<f64>::zeros(m, 1);
        for i in 0..n {
            rhs[(i, 0)] = gamma[i];
        }
        rhs[(n, 0)] = 1.0;
        let mut xi = self.lu.solve(rhs.as_ref());
        // One step of iterative refinement.
        let mut residual = Mat::<f64>::zeros(m, 1);
        for i in 0..m {
            let mut s = rhs[(i, 0)];
            for k in 0..m {
                s -= self.alpha[(i, k)] * xi[(k, 0)];
            }
            residual[(i, 0)] = s;
        }
        let correction = self.lu.solve(residual.as_ref());
        for i in 0..m {
            xi[(i, 0)] += correction[(i, 0)];
        }
        (0..m).map(|i| xi[(i, 0)]).collect()
    }
}

enum BuildFailure {
    IllConditioned,
}

fn one_norm(a: &Mat<f64>) -> f64 {
    let (rows, cols) = (a.nrows(), a.ncols());
    (0..cols)
        .map(|j| (0..rows).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager-style 1-norm estimator of the inverse, using a handful of solves
/// against the cached factorization. The bordered matrix is symmetric, so a
/// transpose solve is a plain solve.
fn inverse_one_norm_estimate(lu: &PartialPivLu<f64>, m: usize) -> f64 {
    let mut x = Mat::<f64>::from_fn(m, 1, |_, _| 1.0 / m as f64);
    let mut estimate = 0.0_f64;
    for _ in 0..5 {
        let y = lu.solve(x.as_ref());
        let y_norm: f64 = (0..m).map(|i| y[(i, 0)].abs()).sum();
        if !y_norm.is_finite() {
            return f64::INFINITY;
        }
        estimate = estimate.max(y_norm);
        let xi = Mat::<f64>::from_fn(m, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve(xi.as_ref());
        let (mut z_inf, mut arg) = (0.0, 0usize);
        for i in 0..m {
            let v = z[(i, 0)].abs();
            if v > z_inf {
                z_inf = v;
                arg = i;
            }
        }
        if !z_inf.is_finite() {
            return f64::INFINITY;
        }
        let ztx: f64 = (0..m).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if z_inf <= ztx {
            break;
        }
        x = Mat::<f64>::from_fn(m, 1, |i, _| if i == arg { 1.0 } else { 0.0 });
    }
    // Alternating-sign probe; catches near-null directions that are invisible
    // to the symmetric starting vector.
    let alt = Mat::<f64>::from_fn(m, 1, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * (1.0 + i as f64 / (m.max(2) - 1) as f64)
    });
    let y = lu.solve(alt.as_ref());
    let alt_norm: f64 = (0..m).map(|i| y[(i, 0)].abs()).sum();
    if !alt_norm.is_finite() {
        return f64::INFINITY;
    }
    estimate.max(2.0 * alt_norm / (3.0 * m as f64))
}

/// Two-sided confidence interval of a normal prediction at probability
/// `prob`, i.e. the inverse CDF evaluated at `(1 ∓ prob) / 2`.
pub fn confidence_interval(p: &Prediction, prob: f64) -> Result<(f64, f64)> {
    if !(0.0 < prob && prob < 1.0) {
        return Err(MlioError::InvalidProbability(prob));
    }
    if p.variance <= 0.0 {
        return Ok((p.mean, p.mean));
    }
    let normal = Normal::new(p.mean, p.variance.sqrt()).expect("positive std dev");
    Ok((
        normal.inverse_cdf((1.0 - prob) / 2.0),
        normal.inverse_cdf((1.0 + prob) / 2.0),
    ))
}

/// Upper half-width of the confidence interval: `Φ⁻¹((1+P)/2) · σ`.
pub fn ci_half_width(variance: f64, prob: f64) -> Result<f64> {
    if !(0.0 < prob && prob < 1.0) {
        return Err(MlioError::InvalidProbability(prob));
    }
    if variance <= 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(normal.inverse_cdf((1.0 + prob) / 2.0) * variance.sqrt())
}
