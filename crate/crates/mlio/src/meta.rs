//! Internal meta-optimizers: a seeded real-coded genetic algorithm for
//! box-bounded acquisition maximization, an exhaustive pool maximizer, and
//! the projected least-squares driver behind variogram fitting.
//!
//! The GA uses tournament selection (size 3), blend crossover, Gaussian
//! mutation with per-generation sigma decay, and elitism of one. Everything
//! here is deterministic for a fixed seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MlioError, Result};

/// Settings for [`ga_maximize`].
#[derive(Debug, Clone)]
pub struct GaConfig {
    /// Population size (at least 4).
    pub population: usize,
    /// Number of generations.
    pub generations: usize,
    /// Per-dimension `[lo, hi]` box bounds.
    pub bounds: Vec<(f64, f64)>,
    /// RNG seed; identical seeds reproduce identical outputs bit-for-bit.
    pub seed: u64,
    /// Individuals injected into the initial population (clamped to bounds).
    pub warm_start: Vec<Vec<f64>>,
}

impl GaConfig {
    /// Config with the stock population/generation budget of 100 each.
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        GaConfig {
            population: 100,
            generations: 100,
            bounds,
            seed,
            warm_start: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(MlioError::InvalidConfig(format!(
                "GA population must be >= 4, got {}",
                self.population
            )));
        }
        if self.bounds.is_empty() || self.bounds.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(MlioError::InvalidConfig(
                "GA bounds must be non-empty and well-ordered".into(),
            ));
        }
        Ok(())
    }
}

/// Maximize a scalar objective over a box with the stock GA.
pub fn ga_maximize<F>(mut objective: F, cfg: &GaConfig) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    ga_maximize_batch(
        |pop: &[Vec<f64>], out: &mut Vec<f64>| {
            out.clear();
            out.extend(pop.iter().map(|x| objective(x)));
        },
        cfg,
    )
}

/// Batch-evaluating variant of [`ga_maximize`]; the evaluator fills one value
/// per individual. The batched form lets Kriging variance objectives solve a
/// whole generation against the cached factorization at once.
pub fn ga_maximize_batch<F>(mut evaluate: F, cfg: &GaConfig) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[Vec<f64>], &mut Vec<f64>),
{
    cfg.validate()?;
    let dim = cfg.bounds.len();
    let pop_size = cfg.population;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let clamp = |x: &mut Vec<f64>| {
        for (v, &(lo, hi)) in x.iter_mut().zip(cfg.bounds.iter()) {
            *v = v.clamp(lo, hi);
        }
    };

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(pop_size);
    for w in cfg.warm_start.iter().take(pop_size) {
        let mut x = w.clone();
        x.resize(dim, 0.0);
        clamp(&mut x);
        pop.push(x);
    }
    while pop.len() < pop_size {
        pop.push(
            cfg.bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                .collect(),
        );
    }

    let mut fitness = Vec::with_capacity(pop_size);
    evaluate(&pop, &mut fitness);
    let (mut best_x, mut best_f) = take_best(&pop, &fitness);

    let spans: Vec<f64> = cfg.bounds.iter().map(|&(lo, hi)| hi - lo).collect();
    let gens = cfg.generations.max(1);
    let mut next = Vec::with_capacity(pop_size);
    for gen in 0..gens {
        // Mutation scale decays from 20% of the span to ~0.1%.
        let progress = gen as f64 / gens as f64;
        let sigma_frac = 0.2 * (5e-3f64).powf(progress);

        next.clear();
        next.push(best_x.clone()); // elitism of 1
        while next.len() < pop_size {
            let a = tournament(&fitness, &mut rng);
            let b = tournament(&fitness, &mut rng);
            let mut child = blend_crossover(&pop[a], &pop[b], &mut rng);
            for (g, v) in child.iter_mut().enumerate() {
                if rng.gen::<f64>() < 1.0 / dim as f64 {
                    *v += sigma_frac * spans[g] * gaussian(&mut rng);
                }
            }
            clamp(&mut child);
            next.push(child);
        }
        std::mem::swap(&mut pop, &mut next);
        evaluate(&pop, &mut fitness);
        let (gx, gf) = take_best(&pop, &fitness);
        if gf > best_f {
            best_f = gf;
            best_x = gx;
        }
    }
    Ok((best_x, best_f))
}

fn take_best(pop: &[Vec<f64>], fitness: &[f64]) -> (Vec<f64>, f64) {
    let mut idx = 0;
    for (i, &f) in fitness.iter().enumerate() {
        if f > fitness[idx] {
            idx = i;
        }
    }
    (pop[idx].clone(), fitness[idx])
}

fn tournament(fitness: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let n = fitness.len();
    let mut winner = rng.gen_range(0..n);
    for _ in 0..2 {
        let challenger = rng.gen_range(0..n);
        if fitness[challenger] > fitness[winner] {
            winner = challenger;
        }
    }
    winner
}

fn blend_crossover(a: &[f64], b: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    // BLX-0.5: sample uniformly in the parent interval extended by half its
    // width on both sides.
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let d = hi - lo;
            rng.gen_range((lo - 0.5 * d)..=(hi + 0.5 * d))
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream layout simple.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Exhaustive maximization over a finite pool; ties break toward the lowest
/// pool index.
pub fn pool_argmax<F>(mut objective: F, pool: &[Vec<f64>]) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    if pool.is_empty() {
        return Err(MlioError::EmptyPool);
    }
    let mut best = 0usize;
    let mut best_f = objective(&pool[0]);
    for (i, p) in pool.iter().enumerate().skip(1) {
        let f = objective(p);
        if f > best_f {
            best_f = f;
            best = i;
        }
    }
    Ok((pool[best].clone(), best_f))
}

/// Index of the maximum value; ties break toward the lowest index.
pub(crate) fn argmax_slice(values: &[f64]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    Some(best)
}

/// Options for [`bounded_least_squares`].
#[derive(Debug, Clone)]
pub struct LeastSquaresOptions {
    /// Iteration cap for the outer Levenberg-Marquardt loop.
    pub max_iter: usize,
    /// Gradient infinity-norm tolerance.
    pub gtol: f64,
    /// Absolute objective tolerance; below this the fit is done.
    pub ftol: f64,
    /// Step infinity-norm tolerance.
    pub step_tol: f64,
}

impl Default for LeastSquaresOptions {
    fn default() -> Self {
        LeastSquaresOptions {
            max_iter: 60,
            gtol: 1e-12,
            ftol: 1e-16,
            step_tol: 1e-12,
        }
    }
}

/// Minimize `sum(residual^2)` over a box via projected Levenberg-Marquardt
/// with a forward-difference Jacobian. Iterates stay feasible and the
/// objective never increases, so the returned objective is at most the one at
/// the (projected) initialization.
pub fn bounded_least_squares<F>(
    residual: &F,
    bounds: &[(f64, f64)],
    init: &[f64],
    m: usize,
    opts: &LeastSquaresOptions,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let p = bounds.len();
    if init.len() != p {
        return Err(MlioError::DimensionMismatch {
            expected: p,
            got: init.len(),
        });
    }
    let project = |x: &mut [f64]| {
        for (v, &(lo, hi)) in x.iter_mut().zip(bounds.iter()) {
            *v = v.clamp(lo, hi);
        }
    };

    let mut x = init.to_vec();
    project(&mut x);
    let mut r = vec![0.0; m];
    residual(&x, &mut r);
    let mut f = sq_norm(&r);
    if !f.is_finite() {
        return Err(MlioError::FitFailure(
            "non-finite residual at the initialization point".into(),
        ));
    }

    let mut jac = vec![0.0; m * p];
    let mut r_probe = vec![0.0; m];
    let mut mu = 1e-3;
    for _ in 0..opts.max_iter {
        if f <= opts.ftol {
            break;
        }
        // Forward-difference Jacobian, flipping to backward at the upper bound.
        for j in 0..p {
            let h0 = f64::EPSILON.sqrt() * (1.0 + x[j].abs());
            let h = if x[j] + h0 <= bounds[j].1 { h0 } else { -h0 };
            let saved = x[j];
            x[j] = (saved + h).clamp(bounds[j].0, bounds[j].1);
            let actual = x[j] - saved;
            if actual == 0.0 {
                for k in 0..m {
                    jac[k * p + j] = 0.0;
                }
                x[j] = saved;
                continue;
            }
            residual(&x, &mut r_probe);
            for k in 0..m {
                jac[k * p + j] = (r_probe[k] - r[k]) / actual;
            }
            x[j] = saved;
        }

        // g = J^T r, h_mat = J^T J
        let mut g = vec![0.0; p];
        let mut h_mat = vec![0.0; p * p];
        for k in 0..m {
            for i in 0..p {
                let jki = jac[k * p + i];
                g[i] += jki * r[k];
                for j in i..p {
                    h_mat[i * p + j] += jki * jac[k * p + j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                h_mat[i * p + j] = h_mat[j * p + i];
            }
        }
        if g.iter().all(|v| v.abs() <= opts.gtol * (1.0 + f)) {
            break;
        }

        let mut accepted = false;
        for _ in 0..12 {
            let mut a = h_mat.clone();
            for i in 0..p {
                a[i * p + i] += mu * (1.0 + h_mat[i * p + i]);
            }
            let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            if !solve_small(&mut a, &mut rhs, p) {
                mu *= 4.0;
                continue;
            }
            let mut xc = x.clone();
            for i in 0..p {
                xc[i] += rhs[i];
            }
            project(&mut xc);
            residual(&xc, &mut r_probe);
            let fc = sq_norm(&r_probe);
            if fc.is_finite() && fc < f {
                let step: f64 = xc
                    .iter()
                    .zip(x.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                x = xc;
                std::mem::swap(&mut r, &mut r_probe);
                f = fc;
                mu = (mu * 0.3).max(1e-12);
                accepted = true;
                if step <= opts.step_tol {
                    return Ok(x);
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            break; // stuck: keep the best feasible point found so far
        }
    }
    Ok(x)
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// In-place Gaussian elimination with partial pivoting for tiny systems.
fn solve_small(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut piv = col;
        for row in (col + 1)..n {
            if a[row * n + col].abs() > a[piv * n + col].abs() {
                piv = row;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return false;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / d;
            a[row * n + col] = 0.0;
            for j in (col + 1)..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for j in (col + 1)..n {
            s -= a[col * n + j] * b[j];
        }
        b[col] = s / a[col * n + col];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ga_finds_interior_optimum() {
        let target = [0.3, 0.7];
        let cfg = GaConfig::new(vec![(0.0, 1.0), (0.0, 1.0)], 42);
        let (x, f) = ga_maximize(
            |p: &[f64]| -((p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2)),
            &cfg,
        )
        .unwrap();
        assert!(f > -1e-4, "best value {f}");
        assert!((x[0] - target[0]).abs() < 1e-2);
        assert!((x[1] - target[1]).abs() < 1e-2);
    }

    #[test]
    fn ga_constant_objective_returns_feasible_point() {
        let cfg = GaConfig::new(vec![(-2.0, -1.0)], 7);
        let (x, f) = ga_maximize(|_: &[f64]| 3.5, &cfg).unwrap();
        assert_eq!(f, 3.5);
        assert!((-2.0..=-1.0).contains(&x[0]));
    }

    #[test]
    fn ga_elitism_preserves_warm_start_optimum() {
        let mut cfg = GaConfig::new(vec![(0.0, 1.0)], 3);
        cfg.warm_start = vec![vec![0.5]];
        let objective = |p: &[f64]| -(p[0] - 0.5).abs();
        let (_, f) = ga_maximize(objective, &cfg).unwrap();
        assert!(f >= objective(&[0.5]));
    }

    #[test]
    fn ga_deterministic_for_fixed_seed() {
        let cfg = GaConfig::new(vec![(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 99);
        let obj = |p: &[f64]| -p.iter().map(|v| (v - 0.2).powi(2)).sum::<f64>();
        let (x1, f1) = ga_maximize(obj, &cfg).unwrap();
        let (x2, f2) = ga_maximize(obj, &cfg).unwrap();
        assert_eq!(f1.to_bits(), f2.to_bits());
        assert_eq!(x1, x2);
    }

    #[test]
    fn ga_never_leaves_bounds() {
        let cfg = GaConfig::new(vec![(0.25, 0.75), (10.0, 11.0)], 5);
        let (x, _) = ga_maximize(|p: &[f64]| p[0] + p[1], &cfg).unwrap();
        assert!((0.25..=0.75).contains(&x[0]));
        assert!((10.0..=11.0).contains(&x[1]));
    }

    #[test]
    fn pool_argmax_singleton_and_ties() {
        let pool = vec![vec![1.0], vec![2.0], vec![3.0]];
        let (x, f) = pool_argmax(|_: &[f64]| 1.0, &pool).unwrap();
        assert_eq!(x, vec![1.0]); // tie -> lowest index
        assert_eq!(f, 1.0);

        let single = vec![vec![9.0]];
        let (x, _) = pool_argmax(|p: &[f64]| p[0], &single).unwrap();
        assert_eq!(x, vec![9.0]);
    }

    #[test]
    fn pool_argmax_matches_independent_scan() {
        let mut state = 12345u64;
        let mut rnd = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        let pool: Vec<Vec<f64>> = (0..1000).map(|_| vec![rnd(), rnd()]).collect();
        let obj = |p: &[f64]| (p[0] * 7.3).sin() + p[1];
        let (x, f) = pool_argmax(obj, &pool).unwrap();
        // Second, independent scan.
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = 0;
        for (i, p) in pool.iter().enumerate() {
            let v = obj(p);
            if v > best {
                best = v;
                best_idx = i;
            }
        }
        assert_eq!(x, pool[best_idx]);
        assert_eq!(f.to_bits(), best.to_bits());
    }

    #[test]
    fn pool_argmax_empty_pool_errors() {
        let pool: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(
            pool_argmax(|_: &[f64]| 0.0, &pool),
            Err(MlioError::EmptyPool)
        ));
    }

    #[test]
    fn lsq_zero_residual_returns_init() {
        let residual = |_p: &[f64], out: &mut [f64]| out.fill(0.0);
        let x = bounded_least_squares(
            &residual,
            &[(0.0, 1.0)],
            &[0.4],
            3,
            &LeastSquaresOptions::default(),
        )
        .unwrap();
        assert_eq!(x, vec![0.4]);
    }

    #[test]
    fn lsq_quadratic_interior_vertex() {
        // Single residual p - 0.6321: objective (p - 0.6321)^2.
        let residual = |p: &[f64], out: &mut [f64]| out[0] = p[0] - 0.6321;
        let x = bounded_least_squares(
            &residual,
            &[(0.0, 1.0)],
            &[0.1],
            1,
            &LeastSquaresOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(x[0], 0.6321, epsilon = 1e-8);
    }

    #[test]
    fn lsq_clamps_to_best_boundary_point() {
        // Optimum at p = 1.7, outside [0, 1]; the feasible minimizer is 1.0.
        let residual = |p: &[f64], out: &mut [f64]| out[0] = p[0] - 1.7;
        let x = bounded_least_squares(
            &residual,
            &[(0.0, 1.0)],
            &[0.2],
            1,
            &LeastSquaresOptions::default(),
        )
        .unwrap();
        // 1-D scan oracle over the feasible set.
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=1000 {
            let p = k as f64 / 1000.0;
            let v = (p - 1.7f64).powi(2);
            if v < best.0 {
                best = (v, p);
            }
        }
        assert_relative_eq!(x[0], best.1, epsilon = 1e-6);
    }

    #[test]
    fn lsq_never_increases_objective() {
        let residual = |p: &[f64], out: &mut [f64]| {
            out[0] = (p[0] * 3.0).sin() + 0.5;
            out[1] = p[1] * p[0] - 0.2;
        };
        let init = [0.9, 0.9];
        let mut r0 = [0.0; 2];
        residual(&init, &mut r0);
        let f0: f64 = r0.iter().map(|v| v * v).sum();
        let x = bounded_least_squares(
            &residual,
            &[(0.0, 1.0), (0.0, 1.0)],
            &init,
            2,
            &LeastSquaresOptions::default(),
        )
        .unwrap();
        let mut r1 = [0.0; 2];
        residual(&x, &mut r1);
        let f1: f64 = r1.iter().map(|v| v * v).sum();
        assert!(f1 <= f0 + 1e-15);
    }
}
