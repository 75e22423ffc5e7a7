//! Analytical benchmark: six translated test functions, Halton reference
//! pools, robust/stochastic uncertainty operators, and the inaccuracy /
//! suboptimality error metrics.
//!
//! Each test problem is a standard global-minimization function with a
//! random translation `T` drawn per repetition. A normalized point
//! `x̄ ∈ [0,1]^D` maps to raw coordinates through
//! `x_d = (x̄_d - T_d) (B_{d,2} - B_{d,1}) + B_{d,1}`, and the raw value is
//! scaled into `[0,1]` between the analytical minimum and a conservative
//! analytical maximum that accounts for the translation. The first half of
//! the coordinates are design variables, the second half uncertain
//! parameters.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlioError, Result};

/// Metric floor: inaccuracy and suboptimality never report below this.
pub const METRIC_FLOOR: f64 = 1e-5;

/// The six analytical test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    /// Non-differentiable sphere of rounded coordinates (symmetric, uni-modal).
    Step,
    /// Absolute sine-modulated ramp (symmetric, multi-modal peaks).
    Alpine,
    /// Ill-conditioned ellipsoid (separable, uni-modal).
    SumSquares,
    /// Barrier landscape on warped coordinates (separable, multi-modal).
    Levy,
    /// Correlated valley (assumption-free, uni-modal).
    Rosenbrock,
    /// Noise-modulated exponential well (assumption-free, multi-modal).
    Ackley,
}

impl TestFunction {
    /// All six functions in benchmark order.
    pub const ALL: [TestFunction; 6] = [
        TestFunction::Step,
        TestFunction::Alpine,
        TestFunction::SumSquares,
        TestFunction::Levy,
        TestFunction::Rosenbrock,
        TestFunction::Ackley,
    ];

    /// Shared per-dimension box bounds `[lo, hi]` in raw coordinates.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            TestFunction::Step | TestFunction::Alpine => (0.0, 20.0),
            TestFunction::SumSquares | TestFunction::Levy => (0.0, 20.0),
            TestFunction::Rosenbrock => (0.0, 1.0),
            TestFunction::Ackley => (0.0, 10.0),
        }
    }

    /// Whether the translation vector must be diagonal (all equal).
    pub fn diagonal_translation(self) -> bool {
        matches!(self, TestFunction::Step | TestFunction::Alpine)
    }

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Step => "step",
            TestFunction::Alpine => "alpine",
            TestFunction::SumSquares => "sumsquares",
            TestFunction::Levy => "levy",
            TestFunction::Rosenbrock => "rosenbrock",
            TestFunction::Ackley => "ackley",
        }
    }

    /// Exact raw-coordinate evaluation.
    pub fn evaluate_raw(self, x: &[f64]) -> f64 {
        let d = x.len();
        match self {
            TestFunction::Step => x.iter().map(|&v| (v + 0.5).floor().powi(2)).sum(),
            TestFunction::Alpine => x.iter().map(|&v| (v * v.sin() + 0.1 * v).abs()).sum(),
            TestFunction::SumSquares => x
                .iter()
                .enumerate()
                .map(|(i, &v)| (i + 1) as f64 * v * v)
                .sum(),
            TestFunction::Levy => {
                let w = |v: f64| 1.0 + (v - 1.0) / 4.0;
                let w1 = w(x[0]);
                let wd = w(x[d - 1]);
                let mut f = (std::f64::consts::PI * w1).sin().powi(2)
                    + (wd - 1.0).powi(2)
                        * (1.0 + (2.0 * std::f64::consts::PI * wd).sin().powi(2));
                for &v in x.iter().take(d.saturating_sub(1)).skip(1) {
                    let wv = w(v);
                    f += (wv - 1.0).powi(2)
                        * (1.0
                            + 10.0
                                * (2.0 * std::f64::consts::PI * wv + 1.0).sin().powi(2));
                }
                f
            }
            TestFunction::Rosenbrock => (0..d - 1)
                .map(|i| 100.0 * (x[i] * x[i] - x[i + 1]).powi(2) + (x[i] - 1.0).powi(2))
                .sum(),
            TestFunction::Ackley => {
                let mean_sq = x.iter().map(|&v| v * v).sum::<f64>() / d as f64;
                let mean_cos = x
                    .iter()
                    .map(|&v| (2.0 * std::f64::consts::PI * v).cos())
                    .sum::<f64>()
                    / d as f64;
                -20.0 * (-0.2 * mean_sq.sqrt()).exp() + 20.0 - mean_cos.exp()
                    + std::f64::consts::E
            }
        }
    }

    /// Parse a function id (case-insensitive).
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "step" => Ok(TestFunction::Step),
            "alpine" => Ok(TestFunction::Alpine),
            "sumsquares" => Ok(TestFunction::SumSquares),
            "levy" => Ok(TestFunction::Levy),
            "rosenbrock" => Ok(TestFunction::Rosenbrock),
            "ackley" => Ok(TestFunction::Ackley),
            other => Err(MlioError::UnknownId(other.to_string())),
        }
    }
}

impl std::str::FromStr for TestFunction {
    type Err = MlioError;

    fn from_str(s: &str) -> Result<Self> {
        TestFunction::parse(s)
    }
}

impl std::fmt::Display for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A translated, normalized test problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestProblem {
    pub function: TestFunction,
    pub dim: usize,
    /// Translation vector in normalized coordinates.
    pub translation: Vec<f64>,
    /// Analytical minimum (zero for all six functions).
    pub min_value: f64,
    /// Conservative analytical maximum given bounds and translation.
    pub max_value: f64,
}

impl TestProblem {
    /// Build a problem with an explicit translation.
    pub fn new(function: TestFunction, dim: usize, translation: Vec<f64>) -> Result<Self> {
        if dim < 2 || dim % 2 != 0 {
            return Err(MlioError::InvalidConfig(format!(
                "benchmark dimensionality must be even and >= 2, got {dim}"
            )));
        }
        if translation.len() != dim {
            return Err(MlioError::DimensionMismatch {
                expected: dim,
                got: translation.len(),
            });
        }
        if !translation.iter().all(|t| (0.0..=1.0).contains(t)) {
            return Err(MlioError::InvalidConfig(
                "translation components must lie in [0, 1]".into(),
            ));
        }
        if function.diagonal_translation()
            && translation.iter().any(|&t| t != translation[0])
        {
            return Err(MlioError::InvalidConfig(
                "this function requires a diagonal translation".into(),
            ));
        }
        let max_value = conservative_max(function, dim, &translation);
        Ok(TestProblem {
            function,
            dim,
            translation,
            min_value: 0.0,
            max_value,
        })
    }

    /// Draw the translation from a seeded stream (diagonal where required).
    pub fn with_seeded_translation(function: TestFunction, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let translation = if function.diagonal_translation() {
            vec![rng.gen_range(0.0..1.0); dim]
        } else {
            (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect()
        };
        TestProblem::new(function, dim, translation)
    }

    /// Number of design dimensions (first half of the coordinates).
    pub fn dim_u(&self) -> usize {
        self.dim / 2
    }

    /// Number of parameter dimensions (second half).
    pub fn dim_p(&self) -> usize {
        self.dim / 2
    }

    /// Map one normalized coordinate to the raw frame.
    fn raw_coord(&self, d: usize, normalized: f64) -> f64 {
        let (lo, hi) = self.function.bounds();
        (normalized - self.translation[d]) * (hi - lo) + lo
    }

    /// Evaluate at a normalized point; the result lies in `[0, 1]` because
    /// the maximum is a conservative bound.
    pub fn evaluate_normalized(&self, x_norm: &[f64]) -> Result<f64> {
        if x_norm.len() != self.dim {
            return Err(MlioError::DimensionMismatch {
                expected: self.dim,
                got: x_norm.len(),
            });
        }
        for (i, &v) in x_norm.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(MlioError::OutOfDomain { index: i, value: v });
            }
        }
        let raw: Vec<f64> = x_norm
            .iter()
            .enumerate()
            .map(|(d, &v)| self.raw_coord(d, v))
            .collect();
        let f = self.function.evaluate_raw(&raw);
        Ok((f - self.min_value) / (self.max_value - self.min_value))
    }
}

/// Conservative analytical maximum over the translated normalized box.
fn conservative_max(function: TestFunction, dim: usize, translation: &[f64]) -> f64 {
    let (lo, hi) = function.bounds();
    let width = hi - lo;
    // Corner with the largest absolute raw coordinates.
    let x_max: Vec<f64> = translation
        .iter()
        .map(|&t| t.max(1.0 - t) * width + lo)
        .collect();
    match function {
        TestFunction::Step | TestFunction::SumSquares => function.evaluate_raw(&x_max),
        TestFunction::Alpine => 1.1 * x_max.iter().map(|v| v.abs()).sum::<f64>(),
        TestFunction::Levy => {
            let w = |v: f64| 1.0 + (v - 1.0) / 4.0;
            let mut bound = 1.0;
            for &v in x_max.iter().take(dim - 1) {
                bound += 11.0 * (w(v) - 1.0).powi(2);
            }
            bound += 2.0 * (w(x_max[dim - 1]) - 1.0).powi(2);
            bound
        }
        TestFunction::Rosenbrock => {
            // Candidate-corner recipe: both indices sweep {0, 0.5, 1} in the
            // normalized frame, applied uniformly across dimensions.
            let corner = |n: f64, d: usize| (n - translation[d]) * width + lo;
            let mut best = f64::NEG_INFINITY;
            for &ni in &[0.0, 0.5, 1.0] {
                for &nj in &[0.0, 0.5, 1.0] {
                    let mut f = 0.0;
                    for d in 0..dim - 1 {
                        let xi = corner(ni, d);
                        let xj = corner(nj, d + 1);
                        f += 100.0 * (xi * xi - xj).powi(2) + (xi - 1.0).powi(2);
                    }
                    best = best.max(f);
                }
            }
            best
        }
        TestFunction::Ackley => {
            let mean_sq = x_max.iter().map(|v| v * v).sum::<f64>() / dim as f64;
            -20.0 * (-0.2 * mean_sq.sqrt()).exp() + 20.0 - (-1.0f64).exp()
                + std::f64::consts::E
        }
    }
}

/// First `n` primes, bases for the Halton radical-inverse streams.
fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while out.len() < n {
        if out.iter().all(|&p| candidate % p != 0) {
            out.push(candidate);
        }
        candidate += 1;
    }
    out
}

/// Radical inverse of `index` in the given base.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut fraction = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * fraction;
        index /= base;
        fraction /= base as f64;
    }
    result
}

/// The `index`-th Halton point (1-based) in `dim` dimensions, using the
/// first `dim` primes as bases. No scrambling, no leapfrogging.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    debug_assert!(index >= 1);
    primes(dim)
        .into_iter()
        .map(|b| radical_inverse(index, b))
        .collect()
}

/// A Halton set of `count` points in `dim` dimensions, indices `1..=count`,
/// with bases starting at the `base_offset`-th prime.
pub fn halton_set(count: usize, dim: usize, base_offset: usize) -> Vec<Vec<f64>> {
    let bases = primes(base_offset + dim).split_off(base_offset);
    (1..=count as u64)
        .map(|i| bases.iter().map(|&b| radical_inverse(i, b)).collect())
        .collect()
}

/// Robust (worst-case) or stochastic (expected-value) aggregation over the
/// parameter samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UqOperator {
    Robust,
    Stochastic,
}

impl UqOperator {
    pub fn aggregate(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            UqOperator::Robust => values.fold(f64::NEG_INFINITY, f64::max),
            UqOperator::Stochastic => {
                let mut sum = 0.0;
                let mut count = 0usize;
                for v in values {
                    sum += v;
                    count += 1;
                }
                sum / count as f64
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UqOperator::Robust => "robust",
            UqOperator::Stochastic => "stochastic",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "robust" => Ok(UqOperator::Robust),
            "stochastic" => Ok(UqOperator::Stochastic),
            other => Err(MlioError::UnknownId(other.to_string())),
        }
    }
}

impl std::fmt::Display for UqOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Factorial reference pool: every design point crossed with every parameter
/// point, with cached normalized responses and ground-truth UQ values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferencePool {
    pub function: TestFunction,
    pub dim: usize,
    pub u_points: Vec<Vec<f64>>,
    pub p_points: Vec<Vec<f64>>,
    /// `responses[(i, j)]` is the normalized value at `(u_i, p_j)`.
    responses: Array2<f64>,
    true_robust: Vec<f64>,
    true_stochastic: Vec<f64>,
}

impl ReferencePool {
    /// Evaluate the full factorial `n_u x n_p` grid of Halton points.
    ///
    /// Design points use the first `D_u` primes; parameter points use the
    /// next `D_p` primes, so the two sets differ even when the halves have
    /// equal dimensionality.
    pub fn build(problem: &TestProblem, n_u: usize, n_p: usize) -> Result<Self> {
        if n_u == 0 || n_p == 0 {
            return Err(MlioError::InvalidConfig(
                "reference pool sizes must be positive".into(),
            ));
        }
        let du = problem.dim_u();
        let dp = problem.dim_p();
        let u_points = halton_set(n_u, du, 0);
        let p_points = halton_set(n_p, dp, du);
        let mut responses = Array2::zeros((n_u, n_p));
        let mut point = vec![0.0; problem.dim];
        for (i, u) in u_points.iter().enumerate() {
            point[..du].copy_from_slice(u);
            for (j, p) in p_points.iter().enumerate() {
                point[du..].copy_from_slice(p);
                responses[(i, j)] = problem.evaluate_normalized(&point)?;
            }
        }
        let true_robust = (0..n_u)
            .map(|i| UqOperator::Robust.aggregate(responses.row(i).iter().copied()))
            .collect();
        let true_stochastic = (0..n_u)
            .map(|i| UqOperator::Stochastic.aggregate(responses.row(i).iter().copied()))
            .collect();
        Ok(ReferencePool {
            function: problem.function,
            dim: problem.dim,
            u_points,
            p_points,
            responses,
            true_robust,
            true_stochastic,
        })
    }

    pub fn n_u(&self) -> usize {
        self.u_points.len()
    }

    pub fn n_p(&self) -> usize {
        self.p_points.len()
    }

    /// Full normalized point for the `(i, j)` grid pair.
    pub fn full_point(&self, i: usize, j: usize) -> Vec<f64> {
        let mut point = Vec::with_capacity(self.dim);
        point.extend_from_slice(&self.u_points[i]);
        point.extend_from_slice(&self.p_points[j]);
        point
    }

    /// All `n_u * n_p` full points in row-major (design-major) order.
    pub fn full_grid(&self) -> Vec<Vec<f64>> {
        let mut grid = Vec::with_capacity(self.n_u() * self.n_p());
        for i in 0..self.n_u() {
            for j in 0..self.n_p() {
                grid.push(self.full_point(i, j));
            }
        }
        grid
    }

    pub fn response(&self, i: usize, j: usize) -> f64 {
        self.responses[(i, j)]
    }

    /// Ground-truth UQ value of design `i` under the operator.
    pub fn uq_true(&self, i: usize, op: UqOperator) -> f64 {
        match op {
            UqOperator::Robust => self.true_robust[i],
            UqOperator::Stochastic => self.true_stochastic[i],
        }
    }

    /// Index of the design with the smallest ground-truth UQ.
    pub fn best_design(&self, op: UqOperator) -> usize {
        let values = match op {
            UqOperator::Robust => &self.true_robust,
            UqOperator::Stochastic => &self.true_stochastic,
        };
        let mut best = 0;
        for (i, &v) in values.iter().enumerate().skip(1) {
            if v < values[best] {
                best = i;
            }
        }
        best
    }

    /// `max - min` of the ground-truth UQ over all designs.
    pub fn uq_range(&self, op: UqOperator) -> f64 {
        let values = match op {
            UqOperator::Robust => &self.true_robust,
            UqOperator::Stochastic => &self.true_stochastic,
        };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    /// Export the pool as a CSV response matrix plus a JSON manifest.
    pub fn export(&self, dir: &std::path::Path, seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = PoolManifest {
            function: self.function,
            dim: self.dim,
            seed,
            n_u: self.n_u(),
            n_p: self.n_p(),
        };
        serde_json::to_writer_pretty(
            std::fs::File::create(dir.join("pool_manifest.json"))?,
            &manifest,
        )?;
        let mut w = csv::Writer::from_path(dir.join("pool_responses.csv"))?;
        let mut header = vec!["u_index".to_string()];
        header.extend((0..self.n_p()).map(|j| format!("p{j}")));
        w.write_record(&header)?;
        for i in 0..self.n_u() {
            let mut row = vec![i.to_string()];
            row.extend(self.responses.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuild a pool from an exported directory, given the problem that
    /// produced it (points are regenerated; responses are read back).
    pub fn import(dir: &std::path::Path, problem: &TestProblem) -> Result<Self> {
        let manifest: PoolManifest = serde_json::from_reader(std::fs::File::open(
            dir.join("pool_manifest.json"),
        )?)?;
        if manifest.function != problem.function || manifest.dim != problem.dim {
            return Err(MlioError::InvalidConfig(
                "pool manifest does not match the problem".into(),
            ));
        }
        let du = problem.dim_u();
        let u_points = halton_set(manifest.n_u, du, 0);
        let p_points = halton_set(manifest.n_p, problem.dim_p(), du);
        let mut responses = Array2::zeros((manifest.n_u, manifest.n_p));
        let mut reader = csv::Reader::from_path(dir.join("pool_responses.csv"))?;
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            for j in 0..manifest.n_p {
                responses[(i, j)] = record[j + 1].parse::<f64>().map_err(|e| {
                    MlioError::InvalidConfig(format!("bad response at ({i},{j}): {e}"))
                })?;
            }
        }
        let true_robust = (0..manifest.n_u)
            .map(|i| UqOperator::Robust.aggregate(responses.row(i).iter().copied()))
            .collect();
        let true_stochastic = (0..manifest.n_u)
            .map(|i| UqOperator::Stochastic.aggregate(responses.row(i).iter().copied()))
            .collect();
        Ok(ReferencePool {
            function: problem.function,
            dim: problem.dim,
            u_points,
            p_points,
            responses,
            true_robust,
            true_stochastic,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolManifest {
    function: TestFunction,
    dim: usize,
    seed: u64,
    n_u: usize,
    n_p: usize,
}

/// A method's current design estimate: chosen pool design index plus the
/// method's own UQ estimate there.
#[derive(Debug, Clone, Copy)]
pub struct DesignEstimate {
    pub u_index: usize,
    pub uq_estimate: f64,
}

/// Inaccuracy and suboptimality of a design estimate against the pool.
///
/// Both are normalized by the ground-truth UQ range over the designs and
/// floored at [`METRIC_FLOOR`]; before any estimate exists they are 1.
pub fn metrics(
    pool: &ReferencePool,
    op: UqOperator,
    estimate: Option<DesignEstimate>,
) -> Result<(f64, f64)> {
    let Some(est) = estimate else {
        return Ok((1.0, 1.0));
    };
    let range = pool.uq_range(op);
    if range <= 0.0 {
        return Err(MlioError::DegenerateNormalizer);
    }
    let truth_at = pool.uq_true(est.u_index, op);
    let best = pool.uq_true(pool.best_design(op), op);
    // Saturate at the theoretical maximum of 1 (an estimate can overshoot
    // the true envelope early on) and floor at the metric resolution.
    let ia = ((est.uq_estimate - truth_at).abs() / range).clamp(METRIC_FLOOR, 1.0);
    let so = ((truth_at - best).abs() / range).clamp(METRIC_FLOOR, 1.0);
    Ok((ia, so))
}
