//! Run the adaptive trainer on a separable black box and watch the per-layer
//! errors fall as samples are spent.
//!
//! ```bash
//! cargo run --example adaptive_training
//! ```

use mlio::driver::{build_initialization, InitSetting, MlioProblem};
use mlio::testbed::{halton_set, UqOperator};
use mlio::trainer::{export_ledger_csv, BlackBox, Trainer, TrainerConfig};

fn main() -> mlio::Result<()> {
    let cost_fn = |x: &[f64]| {
        x.iter()
            .enumerate()
            .map(|(d, &v)| (d + 1) as f64 * (v - 0.35) * (v - 0.35))
            .sum::<f64>()
    };
    let cost: &dyn BlackBox = &cost_fn;

    let designs = halton_set(32, 1, 0);
    let params = halton_set(32, 1, 1);
    let sets = vec![vec![0.41, 0.62], vec![0.79, 0.18]];
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
        n_tot_max: 80,
        seed: 11,
        ..TrainerConfig::default()
    };

    let pools = build_initialization(&problem, InitSetting::One, &cfg)?;
    println!("initialized with {} samples", pools.n_total());

    let mut trainer = Trainer::new(cfg).with_observer(|event| {
        if event.iter % 10 == 0 {
            println!(
                "iter {:>3}  n_tot {:>3}  eps_val {:.2e}/{:.2e}/{:.2e}  eps_ci {:.2e}/{:.2e}/{:.2e}",
                event.iter,
                event.n_tot,
                event.errors.val[0],
                event.errors.val[1],
                event.errors.val[2],
                event.errors.ci[0],
                event.errors.ci[1],
                event.errors.ci[2],
            );
        }
    });
    let outcome = trainer.run(cost, pools)?;

    println!(
        "\nterminated: {:?} after {} evaluations ({} iterations)",
        outcome.state.termination,
        outcome.state.n_evaluations(),
        outcome.state.iter
    );
    let p = outcome.surrogate.predict_full(&[0.35, 0.35])?;
    println!(
        "prediction at the minimizer: {:.5} (truth {:.5})",
        p.mean,
        cost_fn(&[0.35, 0.35])
    );

    let out = std::env::temp_dir().join("training_ledger.csv");
    export_ledger_csv(
        std::fs::File::create(&out)?,
        &outcome.state.ledger,
        outcome.surrogate.dim(),
    )?;
    println!("sample ledger written to {}", out.display());
    Ok(())
}
