//! Orchestration of a full design-under-uncertainty run: initialization
//! layout, the greedy design sweep over the joint surrogate, adaptive
//! training, and extraction of the optimum.
//!
//! The black box maps a concatenated `[u, p]` point in the unit hypercube to
//! a scalar cost. The driver builds the initial pools around the first
//! provided set, trains the decomposed surrogate with the design sweep bound
//! as the greedy operator, and reports the design minimizing the surrogate's
//! uncertainty-aggregated cost.

use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposed::{
    AxisSample, DecomposedSurrogate, FreeSample, ReferenceConfiguration, SamplingPools,
};
use crate::error::{MlioError, Result};
use crate::meta::{ga_maximize_batch, GaConfig};
use crate::testbed::{metrics, DesignEstimate, ReferencePool, UqOperator};
use crate::trainer::{
    BlackBox, LayerErrors, LedgerEntry, TerminationReason, Trainer, TrainerConfig,
};

/// A design-under-uncertainty problem over normalized coordinates.
///
/// The first `dim_u` coordinates are design variables, the remaining `dim_p`
/// uncertain parameters. The parameter sample basis drives every UQ
/// aggregation; an optional finite design grid turns the greedy sweep into
/// an exhaustive scan.
pub struct MlioProblem<'p> {
    pub cost: &'p dyn BlackBox,
    pub dim_u: usize,
    pub dim_p: usize,
    pub uq: UqOperator,
    /// Candidate designs (each of length `dim_u`); `None` means the design
    /// space is searched continuously.
    pub design_candidates: Option<&'p [Vec<f64>]>,
    /// Parameter samples (each of length `dim_p`) for the UQ operator.
    pub param_samples: &'p [Vec<f64>],
    /// Initial full `[u, p]` sets; at least two distinct ones.
    pub initial_sets: &'p [Vec<f64>],
    /// When true and a design grid is present, assumption-free training
    /// samples are restricted to the factorial candidate grid.
    pub restrict_to_candidates: bool,
}

impl MlioProblem<'_> {
    pub fn dim(&self) -> usize {
        self.dim_u + self.dim_p
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_sets.len() < 2 {
            return Err(MlioError::InvalidConfig(
                "at least two initial [u, p] sets are required".into(),
            ));
        }
        for (i, a) in self.initial_sets.iter().enumerate() {
            if a.len() != self.dim() {
                return Err(MlioError::DimensionMismatch {
                    expected: self.dim(),
                    got: a.len(),
                });
            }
            for b in self.initial_sets.iter().skip(i + 1) {
                if a == b {
                    return Err(MlioError::InvalidConfig(
                        "initial sets must be distinct".into(),
                    ));
                }
            }
        }
        if self.param_samples.is_empty() {
            return Err(MlioError::InvalidConfig(
                "the parameter sample basis is empty".into(),
            ));
        }
        Ok(())
    }
}

/// Initialization settings: one or two axis training points per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitSetting {
    One,
    Two,
}

impl InitSetting {
    pub fn axis_points(self) -> usize {
        match self {
            InitSetting::One => 1,
            InitSetting::Two => 2,
        }
    }

    pub fn from_index(idx: u8) -> Result<Self> {
        match idx {
            1 => Ok(InitSetting::One),
            2 => Ok(InitSetting::Two),
            other => Err(MlioError::InvalidConfig(format!(
                "initialization setting must be 1 or 2, got {other}"
            ))),
        }
    }
}

/// Total samples the initialization layout will consume.
pub fn initialization_size(dim: usize, setting: InitSetting, v_ratio: f64) -> usize {
    let n_ss = setting.axis_points();
    let n_fre = 1usize;
    let training = 1 + n_ss * dim + n_fre;
    let validation = (n_ss as f64 * v_ratio).ceil() as usize
        + ((n_ss * (dim - 1)) as f64 * v_ratio).ceil() as usize
        + (n_fre as f64 * v_ratio).ceil() as usize;
    training + validation
}

/// Build and evaluate the initial sampling pools.
///
/// The reference is the first provided set. Axis training points sit on the
/// box edges (the far edge for one point per dimension, both edges for two).
/// The free training point is the second provided set. Validation points
/// follow the maximin diversity rules, one per pool kind scaled by the
/// validation ratio.
pub fn build_initialization(
    problem: &MlioProblem<'_>,
    setting: InitSetting,
    cfg: &TrainerConfig,
) -> Result<SamplingPools> {
    problem.validate()?;
    let dim = problem.dim();
    let needed = initialization_size(dim, setting, cfg.v_ratio);
    if needed > cfg.n_tot_max {
        return Err(MlioError::InsufficientInit {
            needed,
            budget: cfg.n_tot_max,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1217);
    let reference_loc = problem.initial_sets[0].clone();
    let z_ref = problem.cost.evaluate(&reference_loc)?;
    let mut pools = SamplingPools::new(ReferenceConfiguration {
        location: reference_loc,
        value: z_ref,
    });

    // Axis training points on the edges of the box bounds.
    for axis in 0..dim {
        let ref_c = pools.reference.location[axis];
        let coords: Vec<f64> = match setting {
            InitSetting::One => {
                let far = if ref_c <= 0.5 { 1.0 } else { 0.0 };
                vec![far]
            }
            InitSetting::Two => [0.0, 1.0]
                .into_iter()
                .map(|c| if c == ref_c { 0.5 } else { c })
                .collect(),
        };
        for coord in coords {
            let location = pools.axis_point(axis, coord);
            let value = problem.cost.evaluate(&location)?;
            let sample = AxisSample { coord, value };
            if axis == 0 {
                pools.sym_train.push(sample);
            } else {
                pools.sep_train[axis - 1].push(sample);
            }
        }
    }

    // Free training points: remaining provided sets, then random pool draws.
    let n_fre = 1usize;
    let mut provided = problem.initial_sets.iter().skip(1);
    for _ in 0..n_fre {
        let location = match provided.next() {
            Some(loc) => loc.clone(),
            None => match problem.design_candidates {
                Some(designs) if !designs.is_empty() => {
                    let u = &designs[rng.gen_range(0..designs.len())];
                    let p = &problem.param_samples[rng.gen_range(0..problem.param_samples.len())];
                    let mut loc = u.clone();
                    loc.extend_from_slice(p);
                    loc
                }
                _ => {
                    return Err(MlioError::InsufficientInit {
                        needed,
                        budget: cfg.n_tot_max,
                    })
                }
            },
        };
        let value = problem.cost.evaluate(&location)?;
        pools.free_train.push(FreeSample { location, value });
    }

    // Validation points by the maximin diversity rules.
    let v_sym = (setting.axis_points() as f64 * cfg.v_ratio).ceil() as usize;
    for _ in 0..v_sym {
        let coord = maximin_coord(&pools, 0);
        let location = pools.axis_point(0, coord);
        let value = problem.cost.evaluate(&location)?;
        pools.sym_val.push(AxisSample { coord, value });
    }
    let v_sep = ((setting.axis_points() * (dim - 1)) as f64 * cfg.v_ratio).ceil() as usize;
    for _ in 0..v_sep {
        // The axis whose pool currently shows the widest maximin gap.
        let mut best: Option<(usize, f64, f64)> = None;
        for axis in 1..dim {
            let coord = maximin_coord(&pools, axis);
            let coords = axis_pool_coords(&pools, axis);
            let dist = coords
                .iter()
                .map(|&c| (c - coord).abs())
                .fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(_, _, b)| dist > b) {
                best = Some((axis, coord, dist));
            }
        }
        let (axis, coord, _) = best.expect("dim >= 2 when v_sep > 0");
        let location = pools.axis_point(axis, coord);
        let value = problem.cost.evaluate(&location)?;
        pools.sep_val[axis - 1].push(AxisSample { coord, value });
    }
    let v_fre = (n_fre as f64 * cfg.v_ratio).ceil() as usize;
    for k in 0..v_fre {
        let location = free_maximin_point(problem, &pools, cfg, k as u64)?;
        let value = problem.cost.evaluate(&location)?;
        pools.free_val.push(FreeSample { location, value });
    }

    debug_assert_eq!(pools.n_total(), needed);
    Ok(pools)
}

fn axis_pool_coords(pools: &SamplingPools, axis: usize) -> Vec<f64> {
    let mut coords = vec![pools.reference.location[axis]];
    if axis == 0 {
        coords.extend(pools.sym_train.iter().map(|s| s.coord));
        coords.extend(pools.sym_val.iter().map(|s| s.coord));
    } else {
        coords.extend(pools.sep_train[axis - 1].iter().map(|s| s.coord));
        coords.extend(pools.sep_val[axis - 1].iter().map(|s| s.coord));
    }
    coords
}

fn maximin_coord(pools: &SamplingPools, axis: usize) -> f64 {
    crate::trainer::maximin_1d(&axis_pool_coords(pools, axis))
}

/// Full-space maximin point for the free validation pool: over the candidate
/// grid when the problem is grid-restricted, otherwise by a seeded GA.
fn free_maximin_point(
    problem: &MlioProblem<'_>,
    pools: &SamplingPools,
    cfg: &TrainerConfig,
    salt: u64,
) -> Result<Vec<f64>> {
    let mut existing: Vec<Vec<f64>> = pools
        .union_samples()
        .into_iter()
        .map(|s| s.location)
        .collect();
    existing.extend(pools.validation_samples().into_iter().map(|s| s.location));
    let min_dist = |x: &[f64]| {
        existing
            .iter()
            .map(|p| crate::variogram::euclidean(p, x))
            .fold(f64::INFINITY, f64::min)
    };
    match (problem.restrict_to_candidates, problem.design_candidates) {
        (true, Some(designs)) => {
            let mut best: Option<(Vec<f64>, f64)> = None;
            for u in designs {
                for p in problem.param_samples {
                    let mut loc = u.clone();
                    loc.extend_from_slice(p);
                    let d = min_dist(&loc);
                    if d > 0.0 && best.as_ref().map_or(true, |&(_, b)| d > b) {
                        best = Some((loc, d));
                    }
                }
            }
            best.map(|(loc, _)| loc).ok_or(MlioError::NoCandidates)
        }
        _ => {
            let objective = |pop: &[Vec<f64>], out: &mut Vec<f64>| {
                out.clear();
                out.extend(pop.iter().map(|x| min_dist(x)));
            };
            let ga = GaConfig {
                population: cfg.ga_population,
                generations: cfg.ga_generations,
                bounds: vec![(0.0, 1.0); problem.dim()],
                seed: cfg.seed ^ (0x5eed ^ salt.wrapping_mul(0x9E37_79B9)),
                warm_start: Vec::new(),
            };
            let (best, _) = ga_maximize_batch(objective, &ga)?;
            Ok(best)
        }
    }
}

/// Outcome of one greedy design sweep.
#[derive(Debug, Clone)]
pub struct DesignSweep {
    pub u_opt: Vec<f64>,
    /// Index into the design grid when the sweep was exhaustive.
    pub u_index: Option<usize>,
    /// The surrogate's UQ estimate at `u_opt`.
    pub uq_estimate: f64,
    /// Greedy candidate subset: `{u_opt}` crossed with the parameter basis.
    pub subset: Vec<Vec<f64>>,
}

/// Sweep the design space for the minimizer of the surrogate's UQ.
///
/// With a design grid the sweep is exhaustive (ties break toward the lowest
/// index); otherwise a seeded GA searches the design box, warm-started from
/// `warm` when given.
pub fn design_greedy(
    surrogate: &DecomposedSurrogate,
    problem: &MlioProblem<'_>,
    warm: Option<&[f64]>,
    seed: u64,
) -> Result<DesignSweep> {
    if !surrogate.is_trained() {
        return Err(MlioError::NotTrained(3));
    }
    let n_p = problem.param_samples.len();
    match problem.design_candidates {
        Some(designs) => {
            if designs.is_empty() {
                return Err(MlioError::NoCandidates);
            }
            // Batched means over the whole factorial grid.
            let mut points = Vec::with_capacity(designs.len() * n_p);
            for u in designs {
                for p in problem.param_samples {
                    let mut loc = u.clone();
                    loc.extend_from_slice(p);
                    points.push(loc);
                }
            }
            let means = surrogate.full_means(&points)?;
            let mut best: Option<(usize, f64)> = None;
            for (i, chunk) in means.chunks(n_p).enumerate() {
                let uq = problem.uq.aggregate(chunk.iter().copied());
                if best.map_or(true, |(_, b)| uq < b) {
                    best = Some((i, uq));
                }
            }
            let (idx, uq) = best.expect("non-empty grid");
            Ok(DesignSweep {
                u_opt: designs[idx].clone(),
                u_index: Some(idx),
                uq_estimate: uq,
                subset: cross_with_params(&designs[idx], problem.param_samples),
            })
        }
        None => {
            let objective = |pop: &[Vec<f64>], out: &mut Vec<f64>| {
                let mut points = Vec::with_capacity(pop.len() * n_p);
                for u in pop {
                    for p in problem.param_samples {
                        let mut loc = u.clone();
                        loc.extend_from_slice(p);
                        points.push(loc);
                    }
                }
                let means = surrogate.full_means(&points).expect("trained surrogate");
                out.clear();
                out.extend(
                    means
                        .chunks(n_p)
                        .map(|chunk| -problem.uq.aggregate(chunk.iter().copied())),
                );
            };
            let ga = GaConfig {
                population: 100,
                generations: 100,
                bounds: vec![(0.0, 1.0); problem.dim_u],
                seed,
                warm_start: warm.map(|w| vec![w.to_vec()]).unwrap_or_default(),
            };
            let (u_opt, neg_uq) = ga_maximize_batch(objective, &ga)?;
            Ok(DesignSweep {
                subset: cross_with_params(&u_opt, problem.param_samples),
                u_index: None,
                uq_estimate: -neg_uq,
                u_opt,
            })
        }
    }
}

fn cross_with_params(u: &[f64], params: &[Vec<f64>]) -> Vec<Vec<f64>> {
    params
        .iter()
        .map(|p| {
            let mut loc = u.to_vec();
            loc.extend_from_slice(p);
            loc
        })
        .collect()
}

/// Exhaustive design sweep reusing the candidate semivariances already
/// computed by the trainer's assumption-free scan. The factorial layout of
/// the grid collapses the axis-layer contributions to one value per design
/// and one per parameter sample.
fn fast_grid_sweep(
    surrogate: &DecomposedSurrogate,
    problem: &MlioProblem<'_>,
    designs: &[Vec<f64>],
    scan: &crate::trainer::FreeScanView<'_>,
) -> Result<DesignSweep> {
    let n_u = designs.len();
    let n_p = problem.param_samples.len();
    if scan.candidates.len() != n_u * n_p {
        return Err(MlioError::InvalidConfig(
            "scan grid does not match the factorial design layout".into(),
        ));
    }
    let sys = surrogate.layer3_system()?;
    let free_means = sys.means_from_gammas(scan.gammas, scan.candidates.len());

    let z_ref = surrogate.reference().value;
    let (l2_active, l3_active) = surrogate.active_mix();
    let du = problem.dim_u;
    let dim = problem.dim();
    let mut su = vec![0.0f64; n_u];
    let mut sp = vec![0.0f64; n_p];
    if l3_active == Some(crate::decomposed::Variant::Delta) {
        let sym_active = l2_active == Some(crate::decomposed::Variant::Delta);
        for d in 0..dim {
            let (side_u, coords): (bool, Vec<f64>) = if d < du {
                (true, designs.iter().map(|u| u[d]).collect())
            } else {
                (false, problem.param_samples.iter().map(|p| p[d - du]).collect())
            };
            let mut contrib = vec![0.0f64; coords.len()];
            if sym_active {
                for (c, m) in contrib
                    .iter_mut()
                    .zip(surrogate.sym_axis_means(&coords)?)
                {
                    *c += m;
                }
            }
            if d >= 1 {
                for (c, m) in contrib
                    .iter_mut()
                    .zip(surrogate.sep_axis_means(d, &coords)?)
                {
                    *c += m;
                }
            }
            let side = if side_u { &mut su } else { &mut sp };
            for (s, c) in side.iter_mut().zip(contrib) {
                *s += c;
            }
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for i in 0..n_u {
        let uq = problem.uq.aggregate(
            (0..n_p).map(|j| z_ref + su[i] + sp[j] + free_means[i * n_p + j]),
        );
        if best.map_or(true, |(_, b)| uq < b) {
            best = Some((i, uq));
        }
    }
    let (idx, uq) = best.ok_or(MlioError::NoCandidates)?;
    Ok(DesignSweep {
        u_opt: designs[idx].clone(),
        u_index: Some(idx),
        uq_estimate: uq,
        subset: cross_with_params(&designs[idx], problem.param_samples),
    })
}

/// One row of the per-iteration benchmark trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub n_tot: usize,
    /// Design grid index of the current estimate, if any.
    pub u_index: Option<usize>,
    /// The method's own UQ estimate at the current design.
    pub uq_estimate: f64,
    pub ia: f64,
    pub so: f64,
}

/// Result bundle of a full run.
#[derive(Debug)]
pub struct MlioResult {
    pub u_opt: Vec<f64>,
    pub u_index: Option<usize>,
    pub uq_estimate: f64,
    pub surrogate: DecomposedSurrogate,
    pub ledger: Vec<LedgerEntry>,
    pub error_history: Vec<(usize, LayerErrors)>,
    pub errors: LayerErrors,
    pub termination: TerminationReason,
    pub greedy_count: usize,
    pub n_evaluations: usize,
    pub trace: Vec<TraceRow>,
}

struct SweepShared {
    current: Option<DesignSweep>,
    sweeps: usize,
}

/// Run the full pipeline: initialization, adaptive training with the greedy
/// design sweep bound to the assumption-free layer, and final extraction of
/// the optimum from the trained surrogate.
///
/// When `trace_pool` is given (benchmark mode with a design grid), the
/// inaccuracy/suboptimality of the current design estimate is recorded every
/// iteration.
pub fn run_mlio(
    problem: &MlioProblem<'_>,
    cfg: &TrainerConfig,
    setting: InitSetting,
    trace_pool: Option<&ReferencePool>,
) -> Result<MlioResult> {
    cfg.validate()?;
    let pools = build_initialization(problem, setting, cfg)?;

    // Factorial candidate grid for pool-restricted exploration.
    let grid: Option<Vec<Vec<f64>>> = match (problem.restrict_to_candidates, problem.design_candidates)
    {
        (true, Some(designs)) => {
            let mut grid = Vec::with_capacity(designs.len() * problem.param_samples.len());
            for u in designs {
                for p in problem.param_samples {
                    let mut loc = u.clone();
                    loc.extend_from_slice(p);
                    grid.push(loc);
                }
            }
            Some(grid)
        }
        _ => None,
    };

    let shared = Rc::new(RefCell::new(SweepShared {
        current: None,
        sweeps: 0,
    }));
    let trace: Rc<RefCell<Vec<TraceRow>>> = Rc::new(RefCell::new(Vec::new()));

    let greedy_shared = Rc::clone(&shared);
    let greedy_seed = cfg.seed;
    let greedy_op = move |ctx: &crate::trainer::GreedyContext<'_>| -> Result<Vec<Vec<f64>>> {
        let mut shared = greedy_shared.borrow_mut();
        let sweep = match (&ctx.free_scan, problem.design_candidates) {
            (Some(view), Some(designs)) => {
                fast_grid_sweep(ctx.surrogate, problem, designs, view)?
            }
            _ => {
                let warm = shared.current.as_ref().map(|sw| sw.u_opt.clone());
                design_greedy(
                    ctx.surrogate,
                    problem,
                    warm.as_deref(),
                    derive(greedy_seed, shared.sweeps as u64),
                )?
            }
        };
        shared.sweeps += 1;
        let subset = sweep.subset.clone();
        shared.current = Some(sweep);
        Ok(subset)
    };

    let observer_shared = Rc::clone(&shared);
    let observer_trace = Rc::clone(&trace);
    let observer_seed = cfg.seed;
    let observer = move |event: &crate::trainer::TrainerEvent<'_>| {
        let mut shared = observer_shared.borrow_mut();
        // Refresh the design estimate each iteration: exhaustively via the
        // scan-reusing sweep when the factorial grid is available, otherwise
        // with a full sweep on the first iteration and a cheap re-estimate
        // at the standing design afterwards.
        let fast = match (&event.free_scan, problem.design_candidates) {
            (Some(view), Some(designs)) => {
                fast_grid_sweep(event.surrogate, problem, designs, view).ok()
            }
            _ => None,
        };
        if let Some(sweep) = fast {
            shared.sweeps += 1;
            shared.current = Some(sweep);
        } else if shared.current.is_none() {
            if let Ok(sweep) = design_greedy(
                event.surrogate,
                problem,
                None,
                derive(observer_seed, 0xFACE),
            ) {
                shared.sweeps += 1;
                shared.current = Some(sweep);
            }
        } else if !event.greedy_fired {
            // Refresh the UQ estimate at the standing design.
            if let Some(sweep) = shared.current.as_mut() {
                let points = cross_with_params(&sweep.u_opt, problem.param_samples);
                if let Ok(means) = event.surrogate.full_means(&points) {
                    sweep.uq_estimate = problem.uq.aggregate(means.into_iter());
                }
            }
        }
        let (ia, so) = match (trace_pool, shared.current.as_ref()) {
            (Some(pool), Some(sweep)) => {
                let estimate = sweep.u_index.map(|u_index| DesignEstimate {
                    u_index,
                    uq_estimate: sweep.uq_estimate,
                });
                metrics(pool, problem.uq, estimate).unwrap_or((1.0, 1.0))
            }
            _ => (1.0, 1.0),
        };
        observer_trace.borrow_mut().push(TraceRow {
            iter: event.iter,
            n_tot: event.n_tot,
            u_index: shared.current.as_ref().and_then(|s| s.u_index),
            uq_estimate: shared
                .current
                .as_ref()
                .map(|s| s.uq_estimate)
                .unwrap_or(f64::NAN),
            ia,
            so,
        });
    };

    let mut trainer = Trainer::new(cfg.clone())
        .with_greedy(greedy_op)
        .with_observer(observer);
    if let Some(grid) = grid.as_deref() {
        trainer = trainer.with_candidates(grid);
    }
    let outcome = trainer.run(problem.cost, pools)?;
    drop(trainer);

    // Final extraction from the fully retrained surrogate.
    let final_sweep = design_greedy(
        &outcome.surrogate,
        problem,
        shared.borrow().current.as_ref().map(|s| s.u_opt.as_slice()),
        derive(cfg.seed, 0xF1A1),
    )?;
    let mut trace = Rc::try_unwrap(trace)
        .map_err(|_| MlioError::InvalidConfig("trace still shared".into()))?
        .into_inner();
    if let Some(pool) = trace_pool {
        let estimate = final_sweep.u_index.map(|u_index| DesignEstimate {
            u_index,
            uq_estimate: final_sweep.uq_estimate,
        });
        let (ia, so) = metrics(pool, problem.uq, estimate)?;
        trace.push(TraceRow {
            iter: outcome.state.iter + 1,
            n_tot: outcome.surrogate.pools().n_total(),
            u_index: final_sweep.u_index,
            uq_estimate: final_sweep.uq_estimate,
            ia,
            so,
        });
    }

    Ok(MlioResult {
        u_opt: final_sweep.u_opt,
        u_index: final_sweep.u_index,
        uq_estimate: final_sweep.uq_estimate,
        n_evaluations: outcome.state.n_evaluations(),
        ledger: outcome.state.ledger,
        error_history: outcome.state.error_history,
        errors: outcome.state.errors,
        termination: outcome.state.termination,
        greedy_count: outcome.state.greedy_count,
        surrogate: outcome.surrogate,
        trace,
    })
}

fn derive(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 27)
}

/// Write the benchmark trace as CSV.
pub fn export_trace_csv<W: std::io::Write>(writer: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iter", "n_tot", "u_index", "uq_estimate", "ia", "so"])?;
    for row in trace {
        w.write_record(&[
            row.iter.to_string(),
            row.n_tot.to_string(),
            row.u_index.map(|i| i.to_string()).unwrap_or_default(),
            format!("{}", row.uq_estimate),
            format!("{}", row.ia),
            format!("{}", row.so),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary of a run, serialized as the bundle's `summary.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub u_opt: Vec<f64>,
    pub u_index: Option<usize>,
    pub uq_estimate: f64,
    pub termination: TerminationReason,
    pub n_evaluations: usize,
    pub greedy_count: usize,
    pub final_errors: LayerErrors,
    pub final_ia: Option<f64>,
    pub final_so: Option<f64>,
}

impl MlioResult {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            u_opt: self.u_opt.clone(),
            u_index: self.u_index,
            uq_estimate: self.uq_estimate,
            termination: self.termination,
            n_evaluations: self.n_evaluations,
            greedy_count: self.greedy_count,
            final_errors: self.errors,
            final_ia: self.trace.last().map(|t| t.ia),
            final_so: self.trace.last().map(|t| t.so),
        }
    }

    /// Persist the bundle: surrogate snapshot, ledger CSV, trace CSV, and
    /// summary JSON.
    pub fn save_bundle(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.surrogate
            .save_json(std::fs::File::create(dir.join("surrogate.json"))?)?;
        crate::trainer::export_ledger_csv(
            std::fs::File::create(dir.join("ledger.csv"))?,
            &self.ledger,
            self.surrogate.dim(),
        )?;
        export_trace_csv(std::fs::File::create(dir.join("trace.csv"))?, &self.trace)?;
        serde_json::to_writer_pretty(
            std::fs::File::create(dir.join("summary.json"))?,
            &self.summary(),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::{halton_set, ReferencePool, TestFunction, TestProblem};

    #[test]
    fn initialization_counts_match_reference_table() {
        // Setting #1: 7 (D=2), 34 (D=20), 304 (D=200); setting #2: 9, 63, 603.
        for (dim, expected) in [(2usize, 7usize), (20, 34), (200, 304)] {
            assert_eq!(initialization_size(dim, InitSetting::One, 0.5), expected);
        }
        for (dim, expected) in [(2usize, 9usize), (20, 63), (200, 603)] {
            assert_eq!(initialization_size(dim, InitSetting::Two, 0.5), expected);
        }
    }

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 0.4) * (v - 0.4)).sum()
    }

    #[test]
    fn build_initialization_respects_layout() {
        let designs = halton_set(12, 1, 0);
        let params = halton_set(12, 1, 1);
        let sets = vec![vec![0.31, 0.62], vec![0.71, 0.22]];
        let cost: &dyn BlackBox = &(sphere as fn(&[f64]) -> f64);
        let problem = MlioProblem {
            cost,
            dim_u: 1,
            dim_p: 1,
            uq: UqOperator::Robust,
            design_candidates: Some(&designs),
            param_samples: &params,
            initial_sets: &sets,
            restrict_to_candidates: true,
        };
        let cfg = TrainerConfig {
            seed: 5,
            ..TrainerConfig::default()
        };
        let pools = build_initialization(&problem, InitSetting::One, &cfg).unwrap();
        assert_eq!(pools.n_total(), 7);
        assert_eq!(pools.reference.location, sets[0]);
        assert_eq!(pools.sym_train.len(), 1);
        assert_eq!(pools.sep_train[0].len(), 1);
        // Axis points on the far edge from the reference coordinate.
        assert_eq!(pools.sym_train[0].coord, 1.0);
        assert_eq!(pools.sep_train[0][0].coord, 0.0);
        assert_eq!(pools.free_train[0].location, sets[1]);
        assert_eq!(pools.n_validation(), 3);
        pools.validate().unwrap();
    }

    #[test]
    fn insufficient_budget_is_rejected_before_sampling() {
        let designs = halton_set(4, 1, 0);
        let params = halton_set(4, 1, 1);
        let sets = vec![vec![0.31, 0.62], vec![0.71, 0.22]];
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let counting = |x: &[f64]| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            sphere(x)
        };
        let cost: &dyn BlackBox = &counting;
        let problem = MlioProblem {
            cost,
            dim_u: 1,
            dim_p: 1,
            uq: UqOperator::Robust,
            design_candidates: Some(&designs),
            param_samples: &params,
            initial_sets: &sets,
            restrict_to_candidates: true,
        };
        let cfg = TrainerConfig {
            n_tot_max: 5, // below the 7 the layout needs
            ..TrainerConfig::default()
        };
        assert!(matches!(
            build_initialization(&problem, InitSetting::One, &cfg),
            Err(MlioError::InsufficientInit { needed: 7, budget: 5 })
        ));
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 0);
    }

    #[test]
    fn greedy_sweep_constant_surrogate_ties_to_first_design() {
        let designs = halton_set(9, 1, 0);
        let params = halton_set(5, 1, 1);
        let sets = vec![vec![0.31, 0.62], vec![0.71, 0.22]];
        let constant = |_: &[f64]| 1.5;
        let cost: &dyn BlackBox = &constant;
        let problem = MlioProblem {
            cost,
            dim_u: 1,
            dim_p: 1,
            uq: UqOperator::Robust,
            design_candidates: Some(&designs),
            param_samples: &params,
            initial_sets: &sets,
            restrict_to_candidates: true,
        };
        let cfg = TrainerConfig {
            seed: 1,
            ..TrainerConfig::default()
        };
        let pools = build_initialization(&problem, InitSetting::One, &cfg).unwrap();
        let mut s = DecomposedSurrogate::new(pools, 10).unwrap();
        s.train_all().unwrap();
        let sweep = design_greedy(&s, &problem, None, 0).unwrap();
        assert_eq!(sweep.u_index, Some(0)); // tie -> lowest index
        assert_eq!(sweep.subset.len(), params.len());
        assert!((sweep.uq_estimate - 1.5).abs() < 1e-6);
    }

    #[test]
    fn greedy_sweep_finds_known_minimum_on_grid() {
        // Separable quadratic with minimum at u = 0.4: the sweep should pick
        // the grid design closest to it.
        let designs: Vec<Vec<f64>> = (0..21).map(|k| vec![k as f64 / 20.0]).collect();
        let params = halton_set(6, 1, 1);
        let sets = vec![vec![0.11, 0.52], vec![0.91, 0.12]];
        let cost: &dyn BlackBox = &(sphere as fn(&[f64]) -> f64);
        let problem = MlioProblem {
            cost,
            dim_u: 1,
            dim_p: 1,
            uq: UqOperator::Stochastic,
            design_candidates: Some(&designs),
            param_samples: &params,
            initial_sets: &sets,
            restrict_to_candidates: false,
        };
        let cfg = TrainerConfig {
            n_tot_max: 60,
            seed: 23,
            ga_population: 24,
            ga_generations: 16,
            ..TrainerConfig::default()
        };
        let result = run_mlio(&problem, &cfg, InitSetting::One, None).unwrap();
        let u = result.u_opt[0];
        assert!((u - 0.4).abs() <= 0.1, "u_opt {u}");
        // Self-consistency: the reported estimate equals the recomputed UQ of
        // the returned surrogate at u_opt.
        let points = cross_with_params(&result.u_opt, &params);
        let means = result.surrogate.full_means(&points).unwrap();
        let uq = UqOperator::Stochastic.aggregate(means.into_iter());
        assert!((uq - result.uq_estimate).abs() <= 1e-10 * (1.0 + uq.abs()));
    }

    #[test]
    fn robust_and_stochastic_can_disagree_on_spiky_slice() {
        // Three designs, three parameters; design 1 has a spike at one
        // parameter. Robust avoids the spike; stochastic prefers the lower
        // average.
        let grid = [
            [0.2, 0.2, 0.2],  // design 0: flat, lowest worst case
            [0.0, 0.0, 0.45], // design 1: spiky, lowest mean
            [0.3, 0.3, 0.3],  // design 2: flat but higher
        ];
        let cost = move |x: &[f64]| {
            let i = (x[0] * 10.0).round() as usize; // designs at 0.0, 0.1, 0.2
            let j = (x[1] * 10.0).round() as usize;
            grid[i][j]
        };
        let designs: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64 / 10.0]).collect();
        let params: Vec<Vec<f64>> = (0..3).map(|j| vec![j as f64 / 10.0]).collect();
        let robust: Vec<f64> = (0..3)
            .map(|i| {
                UqOperator::Robust.aggregate((0..3).map(|j| cost(&[designs[i][0], params[j][0]])))
            })
            .collect();
        let stochastic: Vec<f64> = (0..3)
            .map(|i| {
                UqOperator::Stochastic
                    .aggregate((0..3).map(|j| cost(&[designs[i][0], params[j][0]])))
            })
            .collect();
        let argmin = |v: &[f64]| {
            v.iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmin(&robust), 0);
        assert_eq!(argmin(&stochastic), 1);
    }

    #[test]
    fn fast_sweep_matches_full_design_greedy() {
        let problem_def =
            TestProblem::with_seeded_translation(TestFunction::Ackley, 2, 8).unwrap();
        let pool = ReferencePool::build(&problem_def, 9, 9).unwrap();
        let black_box = move |x: &[f64]| problem_def.evaluate_normalized(x).unwrap();
        let cost: &dyn BlackBox = &black_box;
        let sets = vec![pool.full_point(1, 2), pool.full_point(6, 4)];
        let problem = MlioProblem {
            cost,
            dim_u: 1,
            dim_p: 1,
            uq: UqOperator::Robust,
            design_candidates: Some(&pool.u_points),
            param_samples: &pool.p_points,
            initial_sets: &sets,
            restrict_to_candidates: true,
        };
        let cfg = TrainerConfig {
            seed: 4,
            ..TrainerConfig::default()
        };
        let pools = build_initialization(&problem, InitSetting::One, &cfg).unwrap();
        let mut s = crate::decomposed::DecomposedSurrogate::new(pools, 10).unwrap();
        s.train_all().unwrap();

        // Pack the candidate semivariances exactly as the trainer scan does.
        let grid = pool.full_grid();
        let sys = s.layer3_system().unwrap();
        let mut gammas = Vec::new();
        for p in &grid {
            gammas.extend(sys.gamma_to(p).unwrap());
        }
        let view = crate::trainer::FreeScanView {
            candidates: &grid,
            gammas: &gammas,
        };
        let fast = fast_grid_sweep(&s, &problem, &pool.u_points, &view).unwrap();
        let full = design_greedy(&s, &problem, None, 0).unwrap();
        assert_eq!(fast.u_index, full.u_index);
        assert!(
            (fast.uq_estimate - full.uq_estimate).abs()
                <= 1e-9 * (1.0 + full.uq_estimate.abs()),
            "{} vs {}",
            fast.uq_estimate,
            full.uq_estimate
        );
    }

    #[test]
    fn traced_run_on_reference_pool() {
        let problem_def =
            TestProblem::with_seeded_translation(TestFunction::SumSquares, 2, 42).unwrap();
        let pool = ReferencePool::build(&problem_def, 12, 12).unwrap();
        let black_box = move |x: &[f64]| problem_def.evaluate_normalized(x).unwrap();
        let cost: &dyn BlackBox = &black_box;
        let sets = vec![pool.full_point(0, 0), pool.full_point(5, 7)];
        let problem = MlioProblem {
            cost,
            dim_u: 1,
            dim_p: 1,
            uq: UqOperator::Robust,
            design_candidates: Some(&pool.u_points),
            param_samples: &pool.p_points,
            initial_sets: &sets,
            restrict_to_candidates: true,
        };
        let cfg = TrainerConfig {
            n_tot_max: 40,
            seed: 77,
            ga_population: 24,
            ga_generations: 12,
            ..TrainerConfig::default()
        };
        let result = run_mlio(&problem, &cfg, InitSetting::One, Some(&pool)).unwrap();
        assert!(!result.trace.is_empty());
        // Metrics respect the floor and the [0, 1] cap from initialization.
        for row in &result.trace {
            assert!(row.ia >= crate::testbed::METRIC_FLOOR);
            assert!(row.so >= crate::testbed::METRIC_FLOOR);
            assert!(row.ia <= 1.0 + 1e-12);
        }
        // u_opt is a pool member.
        assert!(pool.u_points.contains(&result.u_opt));
        // The ledger matches the consumed budget.
        assert_eq!(result.ledger.len(), result.n_evaluations);
        assert!(result.n_evaluations <= 40);
    }
}
