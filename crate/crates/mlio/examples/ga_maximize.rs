//! Box-bounded maximization with the internal real-coded GA, plus the
//! exhaustive pool maximizer.
//!
//! ```bash
//! cargo run --example ga_maximize
//! ```

use mlio::meta::{ga_maximize, pool_argmax, GaConfig};

fn main() -> mlio::Result<()> {
    // Multi-modal landscape with the global maximum at (0.35, 0.65).
    let objective = |x: &[f64]| {
        let bump = |c: &[f64], h: f64| {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            h * (-30.0 * d2).exp()
        };
        bump(&[0.35, 0.65], 1.0) + bump(&[0.8, 0.2], 0.7) + bump(&[0.1, 0.1], 0.5)
    };

    let cfg = GaConfig::new(vec![(0.0, 1.0), (0.0, 1.0)], 42);
    let (best, value) = ga_maximize(objective, &cfg)?;
    println!("GA best: {best:?} -> {value:.6}");

    // Warm starts are injected into the initial population and kept by
    // elitism.
    let mut warm = GaConfig::new(vec![(0.0, 1.0), (0.0, 1.0)], 43);
    warm.warm_start = vec![vec![0.35, 0.65]];
    let (_, warm_value) = ga_maximize(objective, &warm)?;
    println!("warm-started best value: {warm_value:.6}");

    // Exhaustive scan over a finite pool.
    let pool: Vec<Vec<f64>> = (0..20)
        .flat_map(|i| (0..20).map(move |j| vec![i as f64 / 19.0, j as f64 / 19.0]))
        .collect();
    let (point, value) = pool_argmax(objective, &pool)?;
    println!("pool argmax over {} members: {point:?} -> {value:.6}", pool.len());
    Ok(())
}
