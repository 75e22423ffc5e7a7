//! Three-layer decomposed Kriging surrogate.
//!
//! The prediction at a point is reconstructed hierarchically from a constant
//! reference value plus three residual layers:
//!
//! * **Layer 1 (symmetric)** — one shared 1-D Kriging model trained on axis
//!   samples along the first dimension and applied to every coordinate of
//!   the query (the query's d-th component is projected onto the first
//!   axis).
//! * **Layer 2 (separable)** — one 1-D Kriging model per remaining
//!   dimension, trained on axis samples through the reference point.
//! * **Layer 3 (assumption-free)** — a full multivariate Kriging model over
//!   the union of all training samples, recovering whatever the orthogonal
//!   layers missed.
//!
//! Layers 2 and 3 are each trained twice: a *delta* variant on residuals
//! against the previous layer's reconstruction and a *direct* variant on
//! residuals against the reference value alone. Whichever variant shows the
//! smaller validation NRMSE is active; ties prefer delta. Per-layer variance
//! is the sum of the layer's own bordered-system variances.

use serde::{Deserialize, Serialize};

use crate::error::{MlioError, Result};
use crate::kriging::{KrigingSystem, ObservationSet, Prediction};
use crate::variogram::{build_experimental, fit_models, VariogramFit, WarmStarts};

/// Default number of semivariogram lag windows.
pub const DEFAULT_WINDOWS: usize = 10;

/// The pivotal reference configuration shared by all axis pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfiguration {
    pub location: Vec<f64>,
    pub value: f64,
}

/// One axis sample: a full point that differs from the reference in exactly
/// one coordinate, stored as that coordinate plus the response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSample {
    pub coord: f64,
    pub value: f64,
}

/// A full-space sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeSample {
    pub location: Vec<f64>,
    pub value: f64,
}

/// Training and validation pools for the three layers.
///
/// The reference point is pivotal: it participates in every axis system and
/// in the union pool, but is stored once here rather than repeated in the
/// per-layer lists. `sep_train[a]` holds the axis samples for dimension
/// `a + 1` (dimension 0 belongs to the symmetric layer).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingPools {
    pub dim: usize,
    pub reference: ReferenceConfiguration,
    pub sym_train: Vec<AxisSample>,
    pub sym_val: Vec<AxisSample>,
    pub sep_train: Vec<Vec<AxisSample>>,
    pub sep_val: Vec<Vec<AxisSample>>,
    pub free_train: Vec<FreeSample>,
    pub free_val: Vec<FreeSample>,
}

impl SamplingPools {
    /// Empty pools around a reference configuration.
    pub fn new(reference: ReferenceConfiguration) -> Self {
        let dim = reference.location.len();
        let axes = dim.saturating_sub(1);
        SamplingPools {
            dim,
            reference,
            sym_train: Vec::new(),
            sym_val: Vec::new(),
            sep_train: vec![Vec::new(); axes],
            sep_val: vec![Vec::new(); axes],
            free_train: Vec::new(),
            free_val: Vec::new(),
        }
    }

    /// Full point for an axis sample: the reference with one coordinate
    /// replaced.
    pub fn axis_point(&self, axis: usize, coord: f64) -> Vec<f64> {
        let mut p = self.reference.location.clone();
        p[axis] = coord;
        p
    }

    /// Union training pool feeding the assumption-free layer: the reference,
    /// all axis samples as full points, then the free samples.
    pub fn union_samples(&self) -> Vec<FreeSample> {
        let mut out = Vec::with_capacity(self.n_union());
        out.push(FreeSample {
            location: self.reference.location.clone(),
            value: self.reference.value,
        });
        for s in &self.sym_train {
            out.push(FreeSample {
                location: self.axis_point(0, s.coord),
                value: s.value,
            });
        }
        for (a, pool) in self.sep_train.iter().enumerate() {
            for s in pool {
                out.push(FreeSample {
                    location: self.axis_point(a + 1, s.coord),
                    value: s.value,
                });
            }
        }
        out.extend(self.free_train.iter().cloned());
        out
    }

    /// All validation samples as full points, in sym/sep/free order.
    pub fn validation_samples(&self) -> Vec<FreeSample> {
        let mut out = Vec::with_capacity(self.n_validation());
        for s in &self.sym_val {
            out.push(FreeSample {
                location: self.axis_point(0, s.coord),
                value: s.value,
            });
        }
        for (a, pool) in self.sep_val.iter().enumerate() {
            for s in pool {
                out.push(FreeSample {
                    location: self.axis_point(a + 1, s.coord),
                    value: s.value,
                });
            }
        }
        out.extend(self.free_val.iter().cloned());
        out
    }

    /// Union training pool size (reference included).
    pub fn n_union(&self) -> usize {
        1 + self.sym_train.len()
            + self.sep_train.iter().map(Vec::len).sum::<usize>()
            + self.free_train.len()
    }

    /// Total validation count across pools.
    pub fn n_validation(&self) -> usize {
        self.sym_val.len() + self.sep_val.iter().map(Vec::len).sum::<usize>() + self.free_val.len()
    }

    /// Total samples, training plus validation.
    pub fn n_total(&self) -> usize {
        self.n_union() + self.n_validation()
    }

    /// Structural checks: consistent dimensions, coordinates in the unit
    /// box, and no bit-identical duplicates among system-entering samples.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.reference.location.len() != self.dim {
            return Err(MlioError::InvalidConfig(
                "reference dimensionality mismatch".into(),
            ));
        }
        if self.sep_train.len() != self.dim - 1 || self.sep_val.len() != self.dim - 1 {
            return Err(MlioError::InvalidConfig(format!(
                "expected {} separable pools, got {}/{}",
                self.dim - 1,
                self.sep_train.len(),
                self.sep_val.len()
            )));
        }
        let coord_ok = |c: f64| (0.0..=1.0).contains(&c);
        if !self.reference.location.iter().copied().all(coord_ok) {
            return Err(MlioError::InvalidConfig(
                "reference outside the unit box".into(),
            ));
        }
        for (axis, pools) in [(0usize, &self.sym_train), (0, &self.sym_val)]
            .into_iter()
            .chain(
                self.sep_train
                    .iter()
                    .enumerate()
                    .map(|(a, p)| (a + 1, p))
                    .chain(self.sep_val.iter().enumerate().map(|(a, p)| (a + 1, p))),
            )
        {
            let _ = axis;
            if !pools.iter().all(|s| coord_ok(s.coord)) {
                return Err(MlioError::InvalidConfig(
                    "axis coordinate outside [0, 1]".into(),
                ));
            }
        }
        for s in self.free_train.iter().chain(self.free_val.iter()) {
            if s.location.len() != self.dim {
                return Err(MlioError::DimensionMismatch {
                    expected: self.dim,
                    got: s.location.len(),
                });
            }
            if !s.location.iter().copied().all(coord_ok) {
                return Err(MlioError::InvalidConfig(
                    "free sample outside the unit box".into(),
                ));
            }
        }
        // Bit-identical duplicates inside the union pool would make every
        // downstream system singular.
        let union = self.union_samples();
        for i in 0..union.len() {
            for j in (i + 1)..union.len() {
                if union[i].location == union[j].location {
                    return Err(MlioError::InvalidConfig(format!(
                        "duplicate training location at union indices {i} and {j}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Delta (residual against the previous layer) vs direct (residual against
/// the reference value) training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Delta,
    Direct,
}

#[derive(Debug)]
struct SymLayer {
    system: KrigingSystem,
    /// Validation NRMSE; `None` when the symmetric validation pool is empty.
    val_nrmse: Option<f64>,
}

#[derive(Debug)]
struct SepLayer {
    delta: Vec<KrigingSystem>,
    direct: Vec<KrigingSystem>,
    active: Variant,
    val_nrmse_delta: Option<f64>,
    val_nrmse_direct: Option<f64>,
}

#[derive(Debug)]
struct FreeLayer {
    delta: KrigingSystem,
    direct: KrigingSystem,
    active: Variant,
    val_nrmse_delta: Option<f64>,
    val_nrmse_direct: Option<f64>,
}

/// Warm-start store for every variogram fit in the ensemble.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct WarmStore {
    sym: WarmStarts,
    sep_delta: Vec<WarmStarts>,
    sep_direct: Vec<WarmStarts>,
    free_delta: WarmStarts,
    free_direct: WarmStarts,
}

/// The assembled three-layer surrogate.
///
/// A fully trained value is an immutable snapshot for prediction purposes;
/// retraining happens through `&mut self` so the trainer holds exclusive
/// mutation rights.
#[derive(Debug)]
pub struct DecomposedSurrogate {
    pools: SamplingPools,
    n_windows: usize,
    layer1: Option<SymLayer>,
    layer2: Option<SepLayer>,
    layer3: Option<FreeLayer>,
    warm: WarmStore,
}

impl DecomposedSurrogate {
    /// Wrap validated pools; no layer is trained yet.
    pub fn new(pools: SamplingPools, n_windows: usize) -> Result<Self> {
        pools.validate()?;
        let axes = pools.dim - 1;
        Ok(DecomposedSurrogate {
            pools,
            n_windows,
            layer1: None,
            layer2: None,
            layer3: None,
            warm: WarmStore {
                sep_delta: vec![WarmStarts::default(); axes],
                sep_direct: vec![WarmStarts::default(); axes],
                ..WarmStore::default()
            },
        })
    }

    pub fn pools(&self) -> &SamplingPools {
        &self.pools
    }

    pub(crate) fn pools_mut(&mut self) -> &mut SamplingPools {
        &mut self.pools
    }

    pub fn dim(&self) -> usize {
        self.pools.dim
    }

    pub fn reference(&self) -> &ReferenceConfiguration {
        &self.pools.reference
    }

    /// Active delta/direct flags for layers 2 and 3.
    pub fn active_mix(&self) -> (Option<Variant>, Option<Variant>) {
        (
            self.layer2.as_ref().map(|l| l.active),
            self.layer3.as_ref().map(|l| l.active),
        )
    }

    /// Validation NRMSE of the active variant per layer (sym, sep, free).
    pub fn validation_errors(&self) -> [Option<f64>; 3] {
        [
            self.layer1.as_ref().and_then(|l| l.val_nrmse),
            self.layer2.as_ref().and_then(|l| match l.active {
                Variant::Delta => l.val_nrmse_delta,
                Variant::Direct => l.val_nrmse_direct,
            }),
            self.layer3.as_ref().and_then(|l| match l.active {
                Variant::Delta => l.val_nrmse_delta,
                Variant::Direct => l.val_nrmse_direct,
            }),
        ]
    }

    pub fn is_trained(&self) -> bool {
        self.layer1.is_some() && self.layer2.is_some() && self.layer3.is_some()
    }

    /// The symmetric 1-D system.
    pub fn layer1_system(&self) -> Result<&KrigingSystem> {
        Ok(&self.layer1.as_ref().ok_or(MlioError::NotTrained(1))?.system)
    }

    /// The active separable system for `axis` (1-based dimension minus one).
    pub fn layer2_system(&self, axis: usize) -> Result<&KrigingSystem> {
        let l = self.layer2.as_ref().ok_or(MlioError::NotTrained(2))?;
        let pool = match l.active {
            Variant::Delta => &l.delta,
            Variant::Direct => &l.direct,
        };
        pool.get(axis - 1)
            .ok_or(MlioError::DimensionMismatch {
                expected: self.pools.dim - 1,
                got: axis,
            })
    }

    /// The active assumption-free system over the union pool.
    pub fn layer3_system(&self) -> Result<&KrigingSystem> {
        let l = self.layer3.as_ref().ok_or(MlioError::NotTrained(3))?;
        Ok(match l.active {
            Variant::Delta => &l.delta,
            Variant::Direct => &l.direct,
        })
    }

    /// Union pool locations in the exact order seen by the layer-3 systems.
    pub fn union_locations(&self) -> Vec<Vec<f64>> {
        self.union_samples_cached()
            .into_iter()
            .map(|s| s.location)
            .collect()
    }

    fn union_samples_cached(&self) -> Vec<FreeSample> {
        self.pools.union_samples()
    }

    /// Range `max - min` of the observed values backing each layer's error
    /// normalizer: symmetric pool, separable pools, all pools.
    pub fn value_ranges(&self) -> [f64; 3] {
        let r = &self.pools.reference;
        let mut sym = Extremes::seeded(r.value);
        for s in self.pools.sym_train.iter().chain(self.pools.sym_val.iter()) {
            sym.push(s.value);
        }
        let mut sep = Extremes::seeded(r.value);
        for pool in self.pools.sep_train.iter().chain(self.pools.sep_val.iter()) {
            for s in pool {
                sep.push(s.value);
            }
        }
        let mut tot = Extremes::seeded(r.value);
        for s in self.pools.sym_train.iter().chain(self.pools.sym_val.iter()) {
            tot.push(s.value);
        }
        for pool in self.pools.sep_train.iter().chain(self.pools.sep_val.iter()) {
            for s in pool {
                tot.push(s.value);
            }
        }
        for s in self.pools.free_train.iter().chain(self.pools.free_val.iter()) {
            tot.push(s.value);
        }
        [sym.range(), sep.range(), tot.range()]
    }

    /// Rebuild one layer: experimental semivariogram(s), warm-started model
    /// fits, Kriging systems for both variants where applicable, validation
    /// NRMSE, and the active delta/direct flag.
    ///
    /// Layers must be retrained in order 1, 2, 3 after pool changes so that
    /// every residual is taken against the upstream state that predictions
    /// will use.
    pub fn retrain_layer(&mut self, layer: u8) -> Result<()> {
        match layer {
            1 => self.retrain_sym(),
            2 => self.retrain_sep(),
            3 => self.retrain_free(),
            other => Err(MlioError::InvalidConfig(format!(
                "layer must be 1, 2, or 3, got {other}"
            ))),
        }
    }

    /// Retrain all three layers in order.
    pub fn train_all(&mut self) -> Result<()> {
        self.retrain_layer(1)?;
        self.retrain_layer(2)?;
        self.retrain_layer(3)
    }

    fn retrain_sym(&mut self) -> Result<()> {
        let r = &self.pools.reference;
        let mut coords = Vec::with_capacity(1 + self.pools.sym_train.len());
        let mut residuals = Vec::with_capacity(coords.capacity());
        coords.push(vec![r.location[0]]);
        residuals.push(0.0);
        for s in &self.pools.sym_train {
            coords.push(vec![s.coord]);
            residuals.push(s.value - r.value);
        }
        let obs = ObservationSet::new(coords, residuals.clone())?;
        let exp = build_experimental(&obs, &residuals, self.n_windows)?;
        let fit = fit_models(&exp, Some(&self.warm.sym))?;
        self.warm.sym.store(fit.clone());
        let system = KrigingSystem::assemble(obs, &fit)?;

        let val_nrmse = if self.pools.sym_val.is_empty() {
            None
        } else {
            // NRMSE of the full symmetric reconstruction on the symmetric
            // validation points, normalized by the symmetric value range.
            let delta_sym = self.value_ranges()[0];
            let points: Vec<Vec<f64>> = self
                .pools
                .sym_val
                .iter()
                .map(|s| self.pools.axis_point(0, s.coord))
                .collect();
            let means = sym_reconstruction_means(&system, r, &points)?;
            Some(nrmse(
                self.pools.sym_val.iter().map(|s| s.value),
                means.into_iter(),
                delta_sym,
            ))
        };

        self.layer1 = Some(SymLayer { system, val_nrmse });
        Ok(())
    }

    fn retrain_sep(&mut self) -> Result<()> {
        let layer1 = self.layer1.as_ref().ok_or(MlioError::NotTrained(1))?;
        let r = self.pools.reference.clone();
        let dim = self.pools.dim;

        let mut delta_systems = Vec::with_capacity(dim - 1);
        let mut direct_systems = Vec::with_capacity(dim - 1);
        for a in 1..dim {
            let pool = &self.pools.sep_train[a - 1];
            let mut coords = Vec::with_capacity(1 + pool.len());
            coords.push(vec![r.location[a]]);
            for s in pool {
                coords.push(vec![s.coord]);
            }

            // Delta residuals against the symmetric reconstruction.
            let full_points: Vec<Vec<f64>> = std::iter::once(r.location.clone())
                .chain(pool.iter().map(|s| self.pools.axis_point(a, s.coord)))
                .collect();
            let sym_means = sym_reconstruction_means(&layer1.system, &r, &full_points)?;
            let mut delta_res = Vec::with_capacity(full_points.len());
            delta_res.push(r.value - sym_means[0]);
            for (k, s) in pool.iter().enumerate() {
                delta_res.push(s.value - sym_means[k + 1]);
            }

            let mut direct_res = Vec::with_capacity(full_points.len());
            direct_res.push(0.0);
            for s in pool {
                direct_res.push(s.value - r.value);
            }

            let obs = ObservationSet::new(coords, delta_res.clone())?;
            let exp = build_experimental(&obs, &delta_res, self.n_windows)?;
            let fit = fit_models(&exp, Some(&self.warm.sep_delta[a - 1]))?;
            self.warm.sep_delta[a - 1].store(fit.clone());
            delta_systems.push(KrigingSystem::assemble(obs.clone(), &fit)?);

            let obs_direct = ObservationSet::new(obs.locations().to_vec(), direct_res.clone())?;
            let exp = build_experimental(&obs_direct, &direct_res, self.n_windows)?;
            let fit = fit_models(&exp, Some(&self.warm.sep_direct[a - 1]))?;
            self.warm.sep_direct[a - 1].store(fit.clone());
            direct_systems.push(KrigingSystem::assemble(obs_direct, &fit)?);
        }

        let delta_sep = self.value_ranges()[1];
        let val_nrmse_delta = self.sep_val_nrmse(&layer1.system, &delta_systems, Variant::Delta, delta_sep)?;
        let val_nrmse_direct =
            self.sep_val_nrmse(&layer1.system, &direct_systems, Variant::Direct, delta_sep)?;
        // Smaller validation error wins; ties keep the hierarchical delta.
        let active = match (val_nrmse_delta, val_nrmse_direct) {
            (Some(d), Some(x)) if x < d => Variant::Direct,
            _ => Variant::Delta,
        };

        self.layer2 = Some(SepLayer {
            delta: delta_systems,
            direct: direct_systems,
            active,
            val_nrmse_delta,
            val_nrmse_direct,
        });
        Ok(())
    }

    /// Per-dimension validation NRMSE of a candidate separable variant,
    /// reported as the maximum over dimensions with validation points.
    fn sep_val_nrmse(
        &self,
        sym: &KrigingSystem,
        systems: &[KrigingSystem],
        variant: Variant,
        normalizer: f64,
    ) -> Result<Option<f64>> {
        let r = &self.pools.reference;
        let mut worst: Option<f64> = None;
        for a in 1..self.pools.dim {
            let val = &self.pools.sep_val[a - 1];
            if val.is_empty() {
                continue;
            }
            let points: Vec<Vec<f64>> = val
                .iter()
                .map(|s| self.pools.axis_point(a, s.coord))
                .collect();
            let means =
                sep_reconstruction_means(sym, systems, variant, r, &points)?;
            let err = nrmse(val.iter().map(|s| s.value), means.into_iter(), normalizer);
            worst = Some(worst.map_or(err, |w: f64| w.max(err)));
        }
        Ok(worst)
    }

    fn retrain_free(&mut self) -> Result<()> {
        let layer1 = self.layer1.as_ref().ok_or(MlioError::NotTrained(1))?;
        let layer2 = self.layer2.as_ref().ok_or(MlioError::NotTrained(2))?;
        let r = self.pools.reference.clone();

        let union = self.union_samples_cached();
        let locations: Vec<Vec<f64>> = union.iter().map(|s| s.location.clone()).collect();

        let sep_systems = match layer2.active {
            Variant::Delta => &layer2.delta,
            Variant::Direct => &layer2.direct,
        };
        let sep_means =
            sep_reconstruction_means(&layer1.system, sep_systems, layer2.active, &r, &locations)?;
        let delta_res: Vec<f64> = union
            .iter()
            .zip(sep_means.iter())
            .map(|(s, m)| s.value - m)
            .collect();
        let direct_res: Vec<f64> = union.iter().map(|s| s.value - r.value).collect();

        let obs = ObservationSet::new(locations.clone(), delta_res.clone())?;
        let exp = build_experimental(&obs, &delta_res, self.n_windows)?;
        let fit = fit_models(&exp, Some(&self.warm.free_delta))?;
        self.warm.free_delta.store(fit.clone());
        let delta_system = KrigingSystem::assemble(obs, &fit)?;

        let obs = ObservationSet::new(locations, direct_res.clone())?;
        let exp = build_experimental(&obs, &direct_res, self.n_windows)?;
        let fit = fit_models(&exp, Some(&self.warm.free_direct))?;
        self.warm.free_direct.store(fit.clone());
        let direct_system = KrigingSystem::assemble(obs, &fit)?;

        let delta_tot = self.value_ranges()[2];
        let validation = self.pools.validation_samples();
        let (val_nrmse_delta, val_nrmse_direct) = if validation.is_empty() {
            (None, None)
        } else {
            let points: Vec<Vec<f64>> = validation.iter().map(|s| s.location.clone()).collect();
            let actual = validation.iter().map(|s| s.value);
            let delta_means = full_means_with(
                &layer1.system,
                sep_systems,
                layer2.active,
                &delta_system,
                Variant::Delta,
                &r,
                &points,
            )?;
            let direct_means = full_means_with(
                &layer1.system,
                sep_systems,
                layer2.active,
                &direct_system,
                Variant::Direct,
                &r,
                &points,
            )?;
            (
                Some(nrmse(actual.clone(), delta_means.into_iter(), delta_tot)),
                Some(nrmse(actual, direct_means.into_iter(), delta_tot)),
            )
        };
        let active = match (val_nrmse_delta, val_nrmse_direct) {
            (Some(d), Some(x)) if x < d => Variant::Direct,
            _ => Variant::Delta,
        };

        self.layer3 = Some(FreeLayer {
            delta: delta_system,
            direct: direct_system,
            active,
            val_nrmse_delta,
            val_nrmse_direct,
        });
        Ok(())
    }

    /// Symmetric reconstruction: reference value plus the shared 1-D model
    /// applied to every coordinate; variance is the sum over coordinates.
    pub fn predict_symmetric(&self, x: &[f64]) -> Result<Prediction> {
        let l1 = self.layer1.as_ref().ok_or(MlioError::NotTrained(1))?;
        self.check_dim(x)?;
        let mut mean = self.pools.reference.value;
        let mut variance = 0.0;
        for &c in x {
            let p = l1.system.predict(&[c])?;
            mean += p.mean;
            variance += p.variance;
        }
        Ok(Prediction { mean, variance })
    }

    /// Separable reconstruction under the active variant; variance sums the
    /// per-dimension separable system variances only.
    pub fn predict_separable(&self, x: &[f64]) -> Result<Prediction> {
        let l2 = self.layer2.as_ref().ok_or(MlioError::NotTrained(2))?;
        self.check_dim(x)?;
        let systems = match l2.active {
            Variant::Delta => &l2.delta,
            Variant::Direct => &l2.direct,
        };
        let mut mean = match l2.active {
            Variant::Delta => self.predict_symmetric(x)?.mean,
            Variant::Direct => self.pools.reference.value,
        };
        let mut variance = 0.0;
        for (a, sys) in systems.iter().enumerate() {
            let p = sys.predict(&[x[a + 1]])?;
            mean += p.mean;
            variance += p.variance;
        }
        Ok(Prediction { mean, variance })
    }

    /// Complete decomposed prediction; variance is the active layer-3
    /// bordered-system variance.
    pub fn predict_full(&self, x: &[f64]) -> Result<Prediction> {
        let l3 = self.layer3.as_ref().ok_or(MlioError::NotTrained(3))?;
        self.check_dim(x)?;
        match l3.active {
            Variant::Delta => {
                let base = self.predict_separable(x)?.mean;
                let p = l3.delta.predict(x)?;
                Ok(Prediction {
                    mean: base + p.mean,
                    variance: p.variance,
                })
            }
            Variant::Direct => {
                let p = l3.direct.predict(x)?;
                Ok(Prediction {
                    mean: self.pools.reference.value + p.mean,
                    variance: p.variance,
                })
            }
        }
    }

    /// Batched symmetric-layer residual means at 1-D coordinates.
    pub fn sym_axis_means(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let sys = self.layer1_system()?;
        let n = sys.n();
        let mut gammas = Vec::with_capacity(n * coords.len());
        for &c in coords {
            gammas.extend(sys.gamma_to(&[c])?);
        }
        Ok(sys.means_from_gammas(&gammas, coords.len()))
    }

    /// Batched active-variant separable residual means for one axis.
    pub fn sep_axis_means(&self, axis: usize, coords: &[f64]) -> Result<Vec<f64>> {
        let sys = self.layer2_system(axis)?;
        let n = sys.n();
        let mut gammas = Vec::with_capacity(n * coords.len());
        for &c in coords {
            gammas.extend(sys.gamma_to(&[c])?);
        }
        Ok(sys.means_from_gammas(&gammas, coords.len()))
    }

    /// Batched full-reconstruction means.
    pub fn full_means(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let l1 = self.layer1.as_ref().ok_or(MlioError::NotTrained(1))?;
        let l2 = self.layer2.as_ref().ok_or(MlioError::NotTrained(2))?;
        let l3 = self.layer3.as_ref().ok_or(MlioError::NotTrained(3))?;
        let sep_systems = match l2.active {
            Variant::Delta => &l2.delta,
            Variant::Direct => &l2.direct,
        };
        let (free_system, free_variant) = match l3.active {
            Variant::Delta => (&l3.delta, Variant::Delta),
            Variant::Direct => (&l3.direct, Variant::Direct),
        };
        full_means_with(
            &l1.system,
            sep_systems,
            l2.active,
            free_system,
            free_variant,
            &self.pools.reference,
            points,
        )
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.pools.dim {
            return Err(MlioError::DimensionMismatch {
                expected: self.pools.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Serializable snapshot: pools, fitted models, and the active mix.
    pub fn snapshot(&self) -> Result<SurrogateSnapshot> {
        let l1 = self.layer1.as_ref().ok_or(MlioError::NotTrained(1))?;
        let l2 = self.layer2.as_ref().ok_or(MlioError::NotTrained(2))?;
        let l3 = self.layer3.as_ref().ok_or(MlioError::NotTrained(3))?;
        let fit_of = |s: &KrigingSystem| match s.kernel() {
            crate::kriging::Kernel::Fitted(f) => f.clone(),
            crate::kriging::Kernel::Linear { slope } => VariogramFit {
                kind: crate::variogram::VariogramKind::Spherical,
                range: 1.0,
                sill: *slope,
                nugget: 0.0,
                sse: f64::NAN,
            },
        };
        Ok(SurrogateSnapshot {
            schema: SNAPSHOT_SCHEMA.to_string(),
            n_windows: self.n_windows,
            pools: self.pools.clone(),
            sym_fit: fit_of(&l1.system),
            sep_delta_fits: l2.delta.iter().map(fit_of).collect(),
            sep_direct_fits: l2.direct.iter().map(fit_of).collect(),
            free_delta_fit: fit_of(&l3.delta),
            free_direct_fit: fit_of(&l3.direct),
            active_layer2: l2.active,
            active_layer3: l3.active,
        })
    }

    /// Rebuild a surrogate from a snapshot without refitting: systems are
    /// reassembled from the stored pools and fits, and the stored active mix
    /// is kept.
    pub fn from_snapshot(snapshot: &SurrogateSnapshot) -> Result<Self> {
        if snapshot.schema != SNAPSHOT_SCHEMA {
            return Err(MlioError::InvalidConfig(format!(
                "unsupported surrogate schema {:?}",
                snapshot.schema
            )));
        }
        let mut s = DecomposedSurrogate::new(snapshot.pools.clone(), snapshot.n_windows)?;
        let r = s.pools.reference.clone();
        let dim = s.pools.dim;

        // Layer 1 from the stored fit.
        let mut coords = vec![vec![r.location[0]]];
        let mut residuals = vec![0.0];
        for smp in &s.pools.sym_train {
            coords.push(vec![smp.coord]);
            residuals.push(smp.value - r.value);
        }
        let obs = ObservationSet::new(coords, residuals)?;
        let sym_system = KrigingSystem::assemble(obs, &snapshot.sym_fit)?;

        // Layer 2 variants from stored fits.
        let mut delta_systems = Vec::with_capacity(dim - 1);
        let mut direct_systems = Vec::with_capacity(dim - 1);
        for a in 1..dim {
            let pool = &s.pools.sep_train[a - 1];
            let mut coords = vec![vec![r.location[a]]];
            for smp in pool {
                coords.push(vec![smp.coord]);
            }
            let full_points: Vec<Vec<f64>> = std::iter::once(r.location.clone())
                .chain(pool.iter().map(|smp| s.pools.axis_point(a, smp.coord)))
                .collect();
            let sym_means = sym_reconstruction_means(&sym_system, &r, &full_points)?;
            let mut delta_res = vec![r.value - sym_means[0]];
            let mut direct_res = vec![0.0];
            for (k, smp) in pool.iter().enumerate() {
                delta_res.push(smp.value - sym_means[k + 1]);
                direct_res.push(smp.value - r.value);
            }
            let obs = ObservationSet::new(coords.clone(), delta_res)?;
            delta_systems.push(KrigingSystem::assemble(obs, &snapshot.sep_delta_fits[a - 1])?);
            let obs = ObservationSet::new(coords, direct_res)?;
            direct_systems.push(KrigingSystem::assemble(obs, &snapshot.sep_direct_fits[a - 1])?);
        }

        // Layer 3 variants; delta residuals against the stored active mix.
        let union = s.pools.union_samples();
        let locations: Vec<Vec<f64>> = union.iter().map(|u| u.location.clone()).collect();
        let active_sep = match snapshot.active_layer2 {
            Variant::Delta => &delta_systems,
            Variant::Direct => &direct_systems,
        };
        let sep_means = sep_reconstruction_means(
            &sym_system,
            active_sep,
            snapshot.active_layer2,
            &r,
            &locations,
        )?;
        let delta_res: Vec<f64> = union
            .iter()
            .zip(sep_means.iter())
            .map(|(u, m)| u.value - m)
            .collect();
        let direct_res: Vec<f64> = union.iter().map(|u| u.value - r.value).collect();
        let obs = ObservationSet::new(locations.clone(), delta_res)?;
        let free_delta = KrigingSystem::assemble(obs, &snapshot.free_delta_fit)?;
        let obs = ObservationSet::new(locations, direct_res)?;
        let free_direct = KrigingSystem::assemble(obs, &snapshot.free_direct_fit)?;

        s.layer1 = Some(SymLayer {
            system: sym_system,
            val_nrmse: None,
        });
        s.layer2 = Some(SepLayer {
            delta: delta_systems,
            direct: direct_systems,
            active: snapshot.active_layer2,
            val_nrmse_delta: None,
            val_nrmse_direct: None,
        });
        s.layer3 = Some(FreeLayer {
            delta: free_delta,
            direct: free_direct,
            active: snapshot.active_layer3,
            val_nrmse_delta: None,
            val_nrmse_direct: None,
        });
        Ok(s)
    }

    /// Write the snapshot as pretty JSON.
    pub fn save_json<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.snapshot()?)?;
        Ok(())
    }

    /// Load a snapshot written by [`DecomposedSurrogate::save_json`].
    pub fn load_json<R: std::io::Read>(reader: R) -> Result<Self> {
        let snapshot: SurrogateSnapshot = serde_json::from_reader(reader)?;
        Self::from_snapshot(&snapshot)
    }
}

/// Version tag of the surrogate snapshot schema.
pub const SNAPSHOT_SCHEMA: &str = "mlio-surrogate-v1";

/// Self-describing serialized form of a trained [`DecomposedSurrogate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateSnapshot {
    pub schema: String,
    pub n_windows: usize,
    pub pools: SamplingPools,
    pub sym_fit: VariogramFit,
    pub sep_delta_fits: Vec<VariogramFit>,
    pub sep_direct_fits: Vec<VariogramFit>,
    pub free_delta_fit: VariogramFit,
    pub free_direct_fit: VariogramFit,
    pub active_layer2: Variant,
    pub active_layer3: Variant,
}

/// Symmetric reconstruction means at full points: `z_ref + Σ_d g(x_d)`,
/// with all per-coordinate 1-D queries batched into one solve.
fn sym_reconstruction_means(
    sym: &KrigingSystem,
    reference: &ReferenceConfiguration,
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let dim = reference.location.len();
    let n = sym.n();
    let mut gammas = Vec::with_capacity(n * points.len() * dim);
    for p in points {
        for &c in p.iter() {
            gammas.extend(sym.gamma_to(&[c])?);
        }
    }
    let means = sym.means_from_gammas(&gammas, points.len() * dim);
    Ok(points
        .iter()
        .enumerate()
        .map(|(k, _)| {
            reference.value + means[k * dim..(k + 1) * dim].iter().sum::<f64>()
        })
        .collect())
}

/// Separable reconstruction means at full points under a given variant.
fn sep_reconstruction_means(
    sym: &KrigingSystem,
    systems: &[KrigingSystem],
    variant: Variant,
    reference: &ReferenceConfiguration,
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut means = match variant {
        Variant::Delta => sym_reconstruction_means(sym, reference, points)?,
        Variant::Direct => vec![reference.value; points.len()],
    };
    for (a, sys) in systems.iter().enumerate() {
        let n = sys.n();
        let mut gammas = Vec::with_capacity(n * points.len());
        for p in points {
            gammas.extend(sys.gamma_to(&[p[a + 1]])?);
        }
        let contrib = sys.means_from_gammas(&gammas, points.len());
        for (m, c) in means.iter_mut().zip(contrib) {
            *m += c;
        }
    }
    Ok(means)
}

/// Full reconstruction means with explicit variant choices for both layers.
fn full_means_with(
    sym: &KrigingSystem,
    sep_systems: &[KrigingSystem],
    sep_variant: Variant,
    free_system: &KrigingSystem,
    free_variant: Variant,
    reference: &ReferenceConfiguration,
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut means = match free_variant {
        Variant::Delta => {
            sep_reconstruction_means(sym, sep_systems, sep_variant, reference, points)?
        }
        Variant::Direct => vec![reference.value; points.len()],
    };
    let n = free_system.n();
    let mut gammas = Vec::with_capacity(n * points.len());
    for p in points {
        gammas.extend(free_system.gamma_to(p)?);
    }
    let contrib = free_system.means_from_gammas(&gammas, points.len());
    for (m, c) in means.iter_mut().zip(contrib) {
        *m += c;
    }
    Ok(means)
}

fn nrmse(
    actual: impl Iterator<Item = f64>,
    predicted: impl Iterator<Item = f64>,
    range: f64,
) -> f64 {
    // Zero observed range degrades to an absolute RMSE.
    let normalizer = if range > 0.0 { range } else { 1.0 };
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, p) in actual.zip(predicted) {
        sum += ((a - p) / normalizer).powi(2);
        count += 1;
    }
    if count == 0 {
        return 0.0;
    }
    (sum / count as f64).sqrt()
}

struct Extremes {
    min: f64,
    max: f64,
}

impl Extremes {
    fn seeded(v: f64) -> Self {
        Extremes { min: v, max: v }
    }

    fn push(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn range(&self) -> f64 {
        self.max - self.min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Build pools for a black-box `f` on `[0,1]^dim` with axis samples at
    /// the given per-axis coordinates and the given free/validation points.
    fn pools_for(
        f: &dyn Fn(&[f64]) -> f64,
        reference: Vec<f64>,
        axis_coords: &[Vec<f64>],
        free: &[Vec<f64>],
        sym_val: &[f64],
        sep_val: &[Vec<f64>],
        free_val: &[Vec<f64>],
    ) -> SamplingPools {
        let z_ref = f(&reference);
        let mut pools = SamplingPools::new(ReferenceConfiguration {
            location: reference,
            value: z_ref,
        });
        for (axis, coords) in axis_coords.iter().enumerate() {
            for &c in coords {
                let p = pools.axis_point(axis, c);
                let v = f(&p);
                if axis == 0 {
                    pools.sym_train.push(AxisSample { coord: c, value: v });
                } else {
                    pools.sep_train[axis - 1].push(AxisSample { coord: c, value: v });
                }
            }
        }
        for p in free {
            pools.free_train.push(FreeSample {
                location: p.clone(),
                value: f(p),
            });
        }
        for &c in sym_val {
            let p = pools.axis_point(0, c);
            pools.sym_val.push(AxisSample { coord: c, value: f(&p) });
        }
        for (axis, coords) in sep_val.iter().enumerate() {
            for &c in coords {
                let p = pools.axis_point(axis + 1, c);
                pools.sep_val[axis].push(AxisSample { coord: c, value: f(&p) });
            }
        }
        for p in free_val {
            pools.free_val.push(FreeSample {
                location: p.clone(),
                value: f(p),
            });
        }
        pools
    }

    fn separable_quadratic(x: &[f64]) -> f64 {
        // SumSquares-like: fully separable, distinct curvature per dimension.
        x.iter()
            .enumerate()
            .map(|(d, &v)| (d + 1) as f64 * v * v)
            .sum()
    }

    fn trained_2d() -> DecomposedSurrogate {
        let f = |x: &[f64]| separable_quadratic(x);
        let pools = pools_for(
            &f,
            vec![0.5, 0.5],
            &[vec![0.0, 1.0, 0.25], vec![0.0, 1.0, 0.75]],
            &[vec![0.2, 0.8], vec![0.9, 0.1], vec![0.6, 0.4]],
            &[0.6],
            &[vec![0.4]],
            &[vec![0.3, 0.3]],
        );
        let mut s = DecomposedSurrogate::new(pools, DEFAULT_WINDOWS).unwrap();
        s.train_all().unwrap();
        s
    }

    #[test]
    fn untrained_layers_error() {
        let f = |x: &[f64]| separable_quadratic(x);
        let pools = pools_for(
            &f,
            vec![0.5, 0.5],
            &[vec![0.0, 1.0], vec![0.0, 1.0]],
            &[vec![0.2, 0.8]],
            &[],
            &[vec![]],
            &[],
        );
        let s = DecomposedSurrogate::new(pools, DEFAULT_WINDOWS).unwrap();
        assert!(matches!(
            s.predict_symmetric(&[0.5, 0.5]),
            Err(MlioError::NotTrained(1))
        ));
        assert!(matches!(
            s.predict_full(&[0.5, 0.5]),
            Err(MlioError::NotTrained(3))
        ));
    }

    #[test]
    fn pivot_exactness() {
        let s = trained_2d();
        let r = s.reference().clone();
        let p = s.predict_full(&r.location).unwrap();
        assert!(
            (p.mean - r.value).abs() <= 1e-9 * (1.0 + r.value.abs()),
            "pivot mean {} vs {}",
            p.mean,
            r.value
        );
    }

    #[test]
    fn full_prediction_interpolates_every_training_point() {
        let s = trained_2d();
        for sample in s.pools().union_samples() {
            let p = s.predict_full(&sample.location).unwrap();
            assert!(
                (p.mean - sample.value).abs() <= 1e-8 * (1.0 + sample.value.abs()),
                "at {:?}: {} vs {}",
                sample.location,
                p.mean,
                sample.value
            );
        }
    }

    #[test]
    fn symmetric_prediction_at_diagonal_reference() {
        // All reference coordinates equal, so the reference projects onto the
        // symmetric axis as a training point with zero residual.
        let s = trained_2d();
        let p = s.predict_symmetric(&[0.5, 0.5]).unwrap();
        let z_ref = s.reference().value;
        assert!((p.mean - z_ref).abs() <= 1e-8 * (1.0 + z_ref.abs()));
        assert!(p.variance <= 1e-8);
    }

    #[test]
    fn symmetric_variance_sums_over_dimensions() {
        let s = trained_2d();
        let x = [0.33, 0.77];
        let p = s.predict_symmetric(&x).unwrap();
        let l1 = s.layer1_system().unwrap();
        let expected: f64 = x.iter().map(|&c| l1.predict(&[c]).unwrap().variance).sum();
        assert!((p.variance - expected).abs() <= 1e-12 * (1.0 + expected));
    }

    #[test]
    fn one_dimensional_symmetric_matches_ordinary_kriging() {
        let f = |x: &[f64]| (x[0] * 3.0).sin();
        let pools = pools_for(
            &f,
            vec![0.5],
            &[vec![0.0, 0.25, 0.75, 1.0]],
            &[vec![0.6]],
            &[0.4],
            &[],
            &[vec![0.9]],
        );
        let mut s = DecomposedSurrogate::new(pools, DEFAULT_WINDOWS).unwrap();
        s.train_all().unwrap();
        let l1 = s.layer1_system().unwrap();
        for q in [0.1, 0.35, 0.8] {
            let sym = s.predict_symmetric(&[q]).unwrap();
            let ord = l1.predict(&[q]).unwrap();
            let expected = s.reference().value + ord.mean;
            assert!((sym.mean - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            assert!((sym.variance - ord.variance).abs() <= 1e-12);
        }
    }

    #[test]
    fn two_dimensions_have_one_separable_system() {
        let s = trained_2d();
        assert!(s.layer2_system(1).is_ok());
        assert!(s.layer2_system(2).is_err());
    }

    #[test]
    fn axis_interpolation_through_reconstruction_chain() {
        let s = trained_2d();
        // Axis training point of dimension 2 reproduced by the separable
        // reconstruction (D = 2, so the chain telescopes exactly).
        let sample = s.pools().sep_train[0][0];
        let point = s.pools().axis_point(1, sample.coord);
        let p = s.predict_separable(&point).unwrap();
        assert!(
            (p.mean - sample.value).abs() <= 1e-8 * (1.0 + sample.value.abs()),
            "{} vs {}",
            p.mean,
            sample.value
        );
    }

    #[test]
    fn separable_recovery_on_separable_target() {
        // Noiseless separable target with dense axis pools: predictions at
        // interior points should be close on axis slices through the pivot.
        let f = |x: &[f64]| separable_quadratic(x);
        let pools = pools_for(
            &f,
            vec![0.5, 0.5],
            &[
                vec![0.0, 0.25, 0.75, 1.0, 0.375],
                vec![0.0, 0.25, 0.75, 1.0, 0.625],
            ],
            &[vec![0.2, 0.8], vec![0.9, 0.1], vec![0.65, 0.45]],
            &[0.6],
            &[vec![0.4]],
            &[vec![0.3, 0.35]],
        );
        let mut s = DecomposedSurrogate::new(pools, DEFAULT_WINDOWS).unwrap();
        s.train_all().unwrap();
        for &c in &[0.1, 0.55, 0.9] {
            let x = s.pools().axis_point(1, c);
            let p = s.predict_separable(&x).unwrap();
            let truth = f(&x);
            assert!(
                (p.mean - truth).abs() < 0.05,
                "at {:?}: {} vs {}",
                x,
                p.mean,
                truth
            );
        }
    }

    #[test]
    fn constant_target_ties_break_toward_delta() {
        let f = |_: &[f64]| 2.0;
        let pools = pools_for(
            &f,
            vec![0.5, 0.5],
            &[vec![0.0, 1.0], vec![0.0, 1.0]],
            &[vec![0.2, 0.8], vec![0.7, 0.3]],
            &[0.6],
            &[vec![0.4]],
            &[vec![0.3, 0.3]],
        );
        let mut s = DecomposedSurrogate::new(pools, DEFAULT_WINDOWS).unwrap();
        s.train_all().unwrap();
        let (l2, l3) = s.active_mix();
        assert_eq!(l2, Some(Variant::Delta));
        assert_eq!(l3, Some(Variant::Delta));
        let p = s.predict_full(&[0.11, 0.93]).unwrap();
        assert!((p.mean - 2.0).abs() <= 1e-8);
    }

    #[test]
    fn corrupted_symmetric_layer_flips_separable_to_direct() {
        // A wildly asymmetric target makes the symmetric extrapolation
        // misleading along dimension 2; the direct variant should win there.
        let f = |x: &[f64]| 50.0 * (x[0] - 0.5).powi(2) - 0.05 * x[1];
        let pools = pools_for(
            &f,
            vec![0.5, 0.5],
            &[
                vec![0.0, 0.25, 0.75, 1.0],
                vec![0.0, 0.25, 0.75, 1.0],
            ],
            &[vec![0.2, 0.8], vec![0.9, 0.1]],
            &[0.6, 0.4],
            &[vec![0.6, 0.4]],
            &[vec![0.3, 0.35]],
        );
        let mut s = DecomposedSurrogate::new(pools, DEFAULT_WINDOWS).unwrap();
        s.train_all().unwrap();
        let (l2, _) = s.active_mix();
        assert_eq!(
            l2,
            Some(Variant::Direct),
            "validation errors: {:?}",
            (
                s.layer2.as_ref().unwrap().val_nrmse_delta,
                s.layer2.as_ref().unwrap().val_nrmse_direct
            )
        );
    }

    #[test]
    fn retrain_is_idempotent_on_unchanged_pools() {
        let mut s = trained_2d();
        let mix_before = s.active_mix();
        let err_before = s.validation_errors();
        s.train_all().unwrap();
        assert_eq!(s.active_mix(), mix_before);
        let err_after = s.validation_errors();
        for (b, a) in err_before.iter().zip(err_after.iter()) {
            let (b, a) = (b.unwrap(), a.unwrap());
            assert!(a <= b + 1e-12, "error grew from {b} to {a}");
        }
    }

    #[test]
    fn full_means_batch_matches_single_predictions() {
        let s = trained_2d();
        let points = vec![vec![0.1, 0.9], vec![0.42, 0.17], vec![0.73, 0.73]];
        let means = s.full_means(&points).unwrap();
        for (p, m) in points.iter().zip(means.iter()) {
            let single = s.predict_full(p).unwrap().mean;
            assert!((single - m).abs() <= 1e-9 * (1.0 + single.abs()));
        }
    }

    #[test]
    fn snapshot_roundtrip_preserves_predictions() {
        let s = trained_2d();
        let mut buf = Vec::new();
        s.save_json(&mut buf).unwrap();
        let restored = DecomposedSurrogate::load_json(buf.as_slice()).unwrap();
        assert_eq!(restored.active_mix(), s.active_mix());
        for q in [vec![0.15, 0.85], vec![0.6, 0.6], vec![0.98, 0.02]] {
            let a = s.predict_full(&q).unwrap();
            let b = restored.predict_full(&q).unwrap();
            assert!((a.mean - b.mean).abs() <= 1e-10 * (1.0 + a.mean.abs()));
            assert!((a.variance - b.variance).abs() <= 1e-10 * (1.0 + a.variance));
        }
    }

    #[test]
    fn pools_validation_catches_duplicates() {
        let f = |x: &[f64]| separable_quadratic(x);
        let mut pools = pools_for(
            &f,
            vec![0.5, 0.5],
            &[vec![0.0, 1.0], vec![0.0, 1.0]],
            &[vec![0.2, 0.8]],
            &[],
            &[vec![]],
            &[],
        );
        pools.free_train.push(FreeSample {
            location: vec![0.5, 0.5], // duplicates the reference
            value: 0.0,
        });
        assert!(pools.validate().is_err());
    }
}
