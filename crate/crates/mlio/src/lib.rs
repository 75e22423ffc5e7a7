//! Multi-level informed optimization of black-box problems under
//! uncertainty, built on a three-layer decomposed Kriging surrogate.
//!
//! The library maps a joint design/parameter response `cost(u, p)` over the
//! unit hypercube with an adaptively trained ensemble of ordinary Kriging
//! surrogates:
//!
//! * a **symmetric** layer — one shared 1-D model applied to every
//!   coordinate,
//! * a **separable** layer — one 1-D model per remaining dimension,
//! * an **assumption-free** layer — a full multivariate residual model over
//!   the union of all samples,
//!
//! each hierarchically correcting the previous one, with delta/direct
//! training variants selected by validation error. Training interleaves
//! variance-driven exploration, diversity-driven validation, and an optional
//! greedy exploitation operator that refines the most promising designs
//! while the surrogate is still being built.
//!
//! The crate also ships the analytical benchmark used to validate the
//! method: six translated test functions, factorial Halton reference pools,
//! robust/stochastic uncertainty operators, the inaccuracy/suboptimality
//! metrics, and a reproducible campaign runner.
//!
//! # Quick start
//!
//! Train a surrogate on a cheap separable function and query it:
//!
//! ```
//! use mlio::driver::{build_initialization, InitSetting, MlioProblem};
//! use mlio::testbed::{halton_set, UqOperator};
//! use mlio::trainer::{BlackBox, Trainer, TrainerConfig};
//!
//! let cost_fn = |x: &[f64]| x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum::<f64>();
//! let cost: &dyn BlackBox = &cost_fn;
//! let designs = halton_set(16, 1, 0);
//! let params = halton_set(16, 1, 1);
//! let sets = vec![vec![0.41, 0.62], vec![0.79, 0.18]];
//! let problem = MlioProblem {
//!     cost,
//!     dim_u: 1,
//!     dim_p: 1,
//!     uq: UqOperator::Robust,
//!     design_candidates: Some(&designs),
//!     param_samples: &params,
//!     initial_sets: &sets,
//!     restrict_to_candidates: false,
//! };
//! let cfg = TrainerConfig {
//!     n_tot_max: 40,
//!     ga_population: 16,
//!     ga_generations: 8,
//!     ..TrainerConfig::default()
//! };
//! let pools = build_initialization(&problem, InitSetting::One, &cfg).unwrap();
//! let outcome = Trainer::new(cfg).run(cost, pools).unwrap();
//! let p = outcome.surrogate.predict_full(&[0.3, 0.3]).unwrap();
//! assert!(p.variance >= 0.0);
//! ```
//!
//! The `examples/` directory has one runnable example per major capability;
//! the `mlio-bench` binary runs full benchmark campaigns.

pub mod campaign;
pub mod decomposed;
pub mod driver;
pub mod error;
pub mod kriging;
pub mod meta;
pub mod testbed;
pub mod trainer;
pub mod variogram;

pub use crate::campaign::{run_campaign, CampaignConfig, CampaignSummary};
pub use crate::decomposed::{DecomposedSurrogate, SamplingPools, Variant};
pub use crate::driver::{
    build_initialization, design_greedy, run_mlio, InitSetting, MlioProblem, MlioResult,
};
pub use crate::error::{MlioError, Result};
pub use crate::kriging::{confidence_interval, KrigingSystem, ObservationSet, Prediction};
pub use crate::testbed::{ReferencePool, TestFunction, TestProblem, UqOperator};
pub use crate::trainer::{BlackBox, Trainer, TrainerConfig};
pub use crate::variogram::{build_experimental, fit_models, VariogramFit, VariogramKind};
