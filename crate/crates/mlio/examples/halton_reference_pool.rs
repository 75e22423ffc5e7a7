//! Build a factorial Halton reference pool, inspect the ground-truth UQ
//! curves, and export/import it.
//!
//! ```bash
//! cargo run --example halton_reference_pool
//! ```

use mlio::testbed::{halton, ReferencePool, TestFunction, TestProblem, UqOperator};

fn main() -> mlio::Result<()> {
    println!("first Halton points (2-D): ");
    for i in 1..=5 {
        println!("  #{i}: {:?}", halton(i, 2));
    }

    let problem = TestProblem::with_seeded_translation(TestFunction::Alpine, 2, 7)?;
    let pool = ReferencePool::build(&problem, 50, 50)?;
    println!(
        "\npool: {} designs x {} parameters = {} responses",
        pool.n_u(),
        pool.n_p(),
        pool.n_u() * pool.n_p()
    );

    for op in [UqOperator::Robust, UqOperator::Stochastic] {
        let best = pool.best_design(op);
        println!(
            "{:>10}: best design #{best} at u = {:?}, UQ = {:.4}, range {:.4}",
            op.name(),
            pool.u_points[best],
            pool.uq_true(best, op),
            pool.uq_range(op)
        );
    }

    let dir = std::env::temp_dir().join("alpine_pool");
    pool.export(&dir, 7)?;
    let restored = ReferencePool::import(&dir, &problem)?;
    println!(
        "\nexported to {} and re-imported ({} designs)",
        dir.display(),
        restored.n_u()
    );
    Ok(())
}
