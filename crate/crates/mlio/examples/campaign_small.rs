//! A miniature benchmark campaign: two functions, both UQ operators, with
//! per-run bundles, aggregates, and convergence data on disk.
//!
//! ```bash
//! cargo run --release --example campaign_small
//! ```

use mlio::campaign::{run_campaign, CampaignConfig, TrainerOverrides};
use mlio::testbed::{TestFunction, UqOperator};

fn main() -> mlio::Result<()> {
    let out_dir = std::env::temp_dir().join("mlio_campaign_small");
    let cfg = CampaignConfig {
        functions: vec![TestFunction::Step, TestFunction::SumSquares],
        dims: vec![2],
        repetitions: 2,
        budget: 120,
        n_u: 40,
        n_p: 40,
        uq: vec![UqOperator::Robust, UqOperator::Stochastic],
        setting: 1,
        seed: 2024,
        out_dir: out_dir.clone(),
        jobs: 2,
        trainer: TrainerOverrides::default(),
    };

    let summary = run_campaign(&cfg)?;
    println!("{} runs, {} failures", summary.runs.len(), summary.failures());
    for run in &summary.runs {
        let last = run.trace.last();
        println!(
            "  {:<28} {:>4} evals  final IA {:.2e}  SO {:.2e}",
            run.spec.id(),
            run.n_evaluations,
            last.map(|t| t.ia).unwrap_or(f64::NAN),
            last.map(|t| t.so).unwrap_or(f64::NAN),
        );
    }
    println!(
        "\nbundles, aggregate.csv, and convergence.csv under {}",
        out_dir.display()
    );
    Ok(())
}
