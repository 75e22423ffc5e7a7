//! Full design-under-uncertainty run on a translated benchmark function:
//! reference pool, adaptive training with greedy design refinement, and the
//! inaccuracy/suboptimality trace.
//!
//! ```bash
//! cargo run --release --example mlio_run
//! ```

use mlio::driver::{run_mlio, InitSetting, MlioProblem};
use mlio::testbed::{ReferencePool, TestFunction, TestProblem, UqOperator};
use mlio::trainer::{BlackBox, TrainerConfig};

fn main() -> mlio::Result<()> {
    let problem_def = TestProblem::with_seeded_translation(TestFunction::Step, 2, 123)?;
    let pool = ReferencePool::build(&problem_def, 60, 60)?;
    let cost_fn = {
        let p = problem_def.clone();
        move |x: &[f64]| p.evaluate_normalized(x).unwrap()
    };
    let cost: &dyn BlackBox = &cost_fn;

    let initial_sets = vec![pool.full_point(3, 11), pool.full_point(41, 27)];
    let problem = MlioProblem {
        cost,
        dim_u: problem_def.dim_u(),
        dim_p: problem_def.dim_p(),
        uq: UqOperator::Robust,
        design_candidates: Some(&pool.u_points),
        param_samples: &pool.p_points,
        initial_sets: &initial_sets,
        restrict_to_candidates: true,
    };
    let cfg = TrainerConfig {
        n_tot_max: 250,
        seed: 9,
        ..TrainerConfig::default()
    };

    let result = run_mlio(&problem, &cfg, InitSetting::One, Some(&pool))?;

    println!("termination: {:?} after {} evaluations", result.termination, result.n_evaluations);
    println!(
        "u_opt = {:?} (grid index {:?}), surrogate UQ estimate {:.5}",
        result.u_opt, result.u_index, result.uq_estimate
    );
    let truth_best = pool.best_design(UqOperator::Robust);
    println!(
        "true best design: #{truth_best} at {:?} with UQ {:.5}",
        pool.u_points[truth_best],
        pool.uq_true(truth_best, UqOperator::Robust)
    );

    println!("\nIA/SO milestones:");
    for row in result.trace.iter().step_by(25) {
        println!(
            "  n_tot {:>4}: IA {:.2e}  SO {:.2e}",
            row.n_tot, row.ia, row.so
        );
    }
    let last = result.trace.last().unwrap();
    println!("  final   : IA {:.2e}  SO {:.2e}", last.ia, last.so);
    Ok(())
}
