//! Assemble a three-layer decomposed surrogate by hand on a 2-D function,
//! inspect the layer reconstructions and the delta/direct mix, and round-trip
//! it through its JSON snapshot.
//!
//! ```bash
//! cargo run --example decomposed_surrogate
//! ```

use mlio::decomposed::{
    AxisSample, DecomposedSurrogate, FreeSample, ReferenceConfiguration, SamplingPools,
};

fn target(x: &[f64]) -> f64 {
    // Separable trend plus a mild interaction the free layer must absorb.
    x[0] * x[0] + 2.0 * x[1] * x[1] + 0.3 * x[0] * x[1]
}

fn main() -> mlio::Result<()> {
    let reference = vec![0.5, 0.5];
    let mut pools = SamplingPools::new(ReferenceConfiguration {
        value: target(&reference),
        location: reference,
    });
    for &c in &[0.0, 0.25, 0.75, 1.0] {
        let p = pools.axis_point(0, c);
        pools.sym_train.push(AxisSample { coord: c, value: target(&p) });
        let p = pools.axis_point(1, c);
        pools.sep_train[0].push(AxisSample { coord: c, value: target(&p) });
    }
    for loc in [vec![0.2, 0.8], vec![0.85, 0.15], vec![0.65, 0.6]] {
        pools.free_train.push(FreeSample { value: target(&loc), location: loc });
    }
    let sv = pools.axis_point(0, 0.6);
    pools.sym_val.push(AxisSample { coord: 0.6, value: target(&sv) });
    let pv = pools.axis_point(1, 0.4);
    pools.sep_val[0].push(AxisSample { coord: 0.4, value: target(&pv) });
    pools.free_val.push(FreeSample { value: target(&[0.3, 0.3]), location: vec![0.3, 0.3] });

    let mut surrogate = DecomposedSurrogate::new(pools, 10)?;
    surrogate.train_all()?;
    let (l2, l3) = surrogate.active_mix();
    println!("active variants: layer 2 {:?}, layer 3 {:?}", l2, l3);
    println!("validation NRMSE per layer: {:?}", surrogate.validation_errors());

    println!("\n  point          truth    sym      sep      full");
    for q in [[0.1, 0.9], [0.42, 0.17], [0.7, 0.7]] {
        let sym = surrogate.predict_symmetric(&q)?;
        let sep = surrogate.predict_separable(&q)?;
        let full = surrogate.predict_full(&q)?;
        println!(
            "  [{:.2}, {:.2}]   {:.4}   {:.4}   {:.4}   {:.4}",
            q[0],
            q[1],
            target(&q),
            sym.mean,
            sep.mean,
            full.mean
        );
    }

    // Snapshots rebuild the systems from pools and stored fits.
    let path = std::env::temp_dir().join("surrogate_snapshot.json");
    surrogate.save_json(std::fs::File::create(&path)?)?;
    let restored = DecomposedSurrogate::load_json(std::fs::File::open(&path)?)?;
    let q = [0.33, 0.77];
    println!(
        "\nsnapshot round-trip at {:?}: {:.12} vs {:.12}",
        q,
        surrogate.predict_full(&q)?.mean,
        restored.predict_full(&q)?.mean
    );
    Ok(())
}
