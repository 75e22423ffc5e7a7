//! Evaluate the six analytical benchmark functions, raw and normalized.
//!
//! ```bash
//! cargo run --example test_functions
//! ```

use mlio::testbed::{TestFunction, TestProblem};

fn main() -> mlio::Result<()> {
    println!("raw values at small inputs:");
    println!("  step(0.4, -0.3)      = {}", TestFunction::Step.evaluate_raw(&[0.4, -0.3]));
    println!("  sumsquares(1, 2)     = {}", TestFunction::SumSquares.evaluate_raw(&[1.0, 2.0]));
    println!("  ackley(0, 0)         = {}", TestFunction::Ackley.evaluate_raw(&[0.0, 0.0]));
    println!("  levy(1, 1)           = {}", TestFunction::Levy.evaluate_raw(&[1.0, 1.0]));
    println!("  rosenbrock(1, 1)     = {}", TestFunction::Rosenbrock.evaluate_raw(&[1.0, 1.0]));
    println!("  alpine(0, 0)         = {}", TestFunction::Alpine.evaluate_raw(&[0.0, 0.0]));

    println!("\ntranslated, normalized problems (D = 4, seed 42):");
    for function in TestFunction::ALL {
        let p = TestProblem::with_seeded_translation(function, 4, 42)?;
        let center = p.evaluate_normalized(&vec![0.5; 4])?;
        let at_t = p.evaluate_normalized(&p.translation.clone())?;
        println!(
            "  {:<11} bounds {:?}, conservative max {:>10.2}, f(center) = {:.4}, f(T) = {:.4}",
            function.name(),
            function.bounds(),
            p.max_value,
            center,
            at_t
        );
    }
    Ok(())
}
