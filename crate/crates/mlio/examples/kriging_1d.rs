//! Ordinary Kriging on a handful of 1-D observations: assemble the bordered
//! system, predict with confidence intervals, and show exact interpolation.
//!
//! ```bash
//! cargo run --example kriging_1d
//! ```

use mlio::kriging::{confidence_interval, KrigingSystem, ObservationSet};
use mlio::variogram::{VariogramFit, VariogramKind};

fn main() -> mlio::Result<()> {
    let coords = [0.0, 0.2, 0.45, 0.8, 1.0];
    let f = |x: f64| (3.5 * x).sin() + 0.5 * x;
    let obs = ObservationSet::new(
        coords.iter().map(|&c| vec![c]).collect(),
        coords.iter().map(|&c| f(c)).collect(),
    )?;

    let fit = VariogramFit {
        kind: VariogramKind::Gaussian,
        range: 0.4,
        sill: 0.8,
        nugget: 0.0,
        sse: 0.0,
    };
    let system = KrigingSystem::assemble(obs, &fit)?;
    println!(
        "assembled {}-point system, condition ~{:.2e}",
        system.n(),
        system.condition()
    );

    println!("\n  x      truth    mean     ± 95% CI half-width   variance");
    for k in 0..=10 {
        let x = k as f64 / 10.0;
        let p = system.predict(&[x])?;
        let (lo, hi) = confidence_interval(&p, 0.95)?;
        println!(
            "  {:.2}   {:>6.3}   {:>6.3}   ± {:.4}              {:.2e}",
            x,
            f(x),
            p.mean,
            (hi - lo) / 2.0,
            p.variance
        );
    }

    // Training points are reproduced exactly and carry no variance.
    let p = system.predict(&[0.45])?;
    println!(
        "\ninterpolation at a training point: mean {:.12} (truth {:.12}), variance {:.1e}",
        p.mean,
        f(0.45),
        p.variance
    );
    Ok(())
}
