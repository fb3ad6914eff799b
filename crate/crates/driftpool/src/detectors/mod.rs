//! The detector contract and the built-in architecture set of lightweight
//! online detectors.
//!
//! Every detector follows a pure test-then-train protocol per point:
//! [`Detector::step`] scores the incoming point against the current state
//! and then absorbs it. Batch scoring runs the chain on a clone of the
//! state, so scoring never mutates the pool; a subsequent update replays
//! the same chain on the real state. This makes score sequences identical
//! no matter how the stream is cut into batches.

mod ar;
mod knn;
mod loda;
mod pca;
mod zscore;

use std::collections::BTreeMap;
use std::hash::Hasher;

use crate::stream::{Batch, TimePoint};
use crate::{Error, ModelId, Result};

pub use ar::ArForecast;
pub use knn::WindowKnn;
pub use loda::ProjHist;
pub use pca::IncPca;
pub use zscore::EwmaZScore;

/// Online anomaly detector: initial fit, then per-point score-and-absorb.
pub trait Detector: Send + Sync {
    /// Minimum number of points `fit` needs.
    fn warmup(&self) -> usize;

    /// Input dimensionality, fixed at fit time.
    fn dimension(&self) -> usize;

    /// Initial training; resets any previous state.
    fn fit(&mut self, points: &[TimePoint]);

    /// Scores one point against the current state, then absorbs it.
    /// Higher scores are more anomalous.
    fn step(&mut self, values: &[f64]) -> f64;

    fn box_clone(&self) -> Box<dyn Detector>;

    /// Feeds the learned state into a hasher; used to verify no-touch
    /// guarantees.
    fn digest(&self, h: &mut dyn Hasher);
}

impl Clone for Box<dyn Detector> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

pub(crate) fn digest_f64s<'a>(h: &mut dyn Hasher, vals: impl IntoIterator<Item = &'a f64>) {
    for v in vals {
        h.write_u64(v.to_bits());
    }
}

/// Splitmix64; used to derive per-model seeds from the run seed so each
/// model's randomness is reproducible and independent.
pub fn model_seed(run_seed: u64, id: ModelId) -> u64 {
    fn splitmix64(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix64(run_seed ^ splitmix64(id.0.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

// ---------------------------------------------------------------------------
// Architecture specs
// ---------------------------------------------------------------------------

/// Registered detector families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub enum ArchitectureId {
    /// Random-projection histogram density estimator.
    ProjHist,
    /// Running EWMA z-score with winsorized absorption.
    ZScore,
    /// Autoregressive forecaster scored by absolute residual (NLMS updates).
    ArForecast,
    /// Incremental PCA over delay-embedded windows, scored by
    /// reconstruction error.
    IncPca,
    /// k-nearest-neighbor distance over a reservoir of past windows.
    WindowKnn,
}

impl ArchitectureId {
    pub fn key(&self) -> &'static str {
        match self {
            Self::ProjHist => "proj_hist",
            Self::ZScore => "zscore",
            Self::ArForecast => "ar_forecast",
            Self::IncPca => "inc_pca",
            Self::WindowKnn => "window_knn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "proj_hist" => Ok(Self::ProjHist),
            "zscore" => Ok(Self::ZScore),
            "ar_forecast" => Ok(Self::ArForecast),
            "inc_pca" => Ok(Self::IncPca),
            "window_knn" => Ok(Self::WindowKnn),
            other => Err(Error::UnknownArchitecture(other.to_string())),
        }
    }

    /// `(key, min, max, default)` for every hyperparameter of the family.
    fn schema(&self) -> &'static [(&'static str, f64, f64, f64)] {
        match self {
            Self::ProjHist => &[
                ("projections", 1.0, 256.0, 8.0),
                ("bins", 4.0, 4096.0, 32.0),
            ],
            Self::ZScore => &[("decay", 1e-6, 1.0, 0.02), ("clamp", 1.0, 64.0, 8.0)],
            Self::ArForecast => &[("order", 1.0, 128.0, 8.0), ("lr", 1e-6, 1.0, 0.05)],
            Self::IncPca => &[
                ("window", 2.0, 256.0, 8.0),
                ("components", 1.0, 32.0, 2.0),
            ],
            Self::WindowKnn => &[
                ("window", 1.0, 256.0, 8.0),
                ("k", 1.0, 64.0, 5.0),
                ("reservoir", 8.0, 65536.0, 2048.0),
            ],
        }
    }
}

/// An architecture plus a hyperparameter assignment; the recipe a concrete
/// model is instantiated from.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ArchitectureSpec {
    pub architecture_id: ArchitectureId,
    pub hyperparams: BTreeMap<String, f64>,
}

impl ArchitectureSpec {
    pub fn new(id: ArchitectureId, params: &[(&str, f64)]) -> Self {
        Self {
            architecture_id: id,
            hyperparams: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// Checks every provided hyperparameter against the family schema.
    pub fn validate(&self) -> Result<()> {
        let schema = self.architecture_id.schema();
        for (key, value) in &self.hyperparams {
            let Some((_, lo, hi, _)) = schema.iter().find(|(k, ..)| k == key) else {
                return Err(Error::InvalidHyperparam {
                    family: self.architecture_id.key().into(),
                    msg: format!("unknown key `{key}`"),
                });
            };
            if !value.is_finite() || value < lo || value > hi {
                return Err(Error::InvalidHyperparam {
                    family: self.architecture_id.key().into(),
                    msg: format!("`{key}`={value} outside [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }

    fn param(&self, key: &str) -> f64 {
        self.hyperparams.get(key).copied().unwrap_or_else(|| {
            self.architecture_id
                .schema()
                .iter()
                .find(|(k, ..)| *k == key)
                .map(|(_, _, _, d)| *d)
                .expect("key present in schema")
        })
    }

    fn param_usize(&self, key: &str) -> usize {
        self.param(key).round() as usize
    }

    /// Points required to fit a model of this spec.
    pub fn warmup(&self) -> usize {
        match self.architecture_id {
            ArchitectureId::ProjHist => 8,
            ArchitectureId::ZScore => 2,
            ArchitectureId::ArForecast => self.param_usize("order") + 1,
            ArchitectureId::IncPca => {
                self.param_usize("window") + self.param_usize("components") + 2
            }
            ArchitectureId::WindowKnn => self.param_usize("window") + self.param_usize("k"),
        }
    }

    /// Builds an untrained detector; `seed` drives any internal randomness.
    pub fn build(&self, seed: u64) -> Box<dyn Detector> {
        match self.architecture_id {
            ArchitectureId::ProjHist => Box::new(ProjHist::new(
                self.param_usize("projections"),
                self.param_usize("bins"),
                seed,
            )),
            ArchitectureId::ZScore => {
                Box::new(EwmaZScore::new(self.param("decay"), self.param("clamp")))
            }
            ArchitectureId::ArForecast => {
                Box::new(ArForecast::new(self.param_usize("order"), self.param("lr")))
            }
            ArchitectureId::IncPca => Box::new(IncPca::new(
                self.param_usize("window"),
                self.param_usize("components"),
            )),
            ArchitectureId::WindowKnn => Box::new(WindowKnn::new(
                self.param_usize("window"),
                self.param_usize("k"),
                self.param_usize("reservoir"),
                seed,
            )),
        }
    }

    /// One-line plain-text form: `family key=value key=value`.
    pub fn to_line(&self) -> String {
        let mut line = self.architecture_id.key().to_string();
        for (k, v) in &self.hyperparams {
            line.push_str(&format!(" {k}={v}"));
        }
        line
    }

    /// Parses the [`Self::to_line`] form.
    pub fn parse_line(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let family = parts
            .next()
            .ok_or_else(|| Error::UnknownArchitecture("<empty>".into()))?;
        let id = ArchitectureId::parse(family)?;
        let mut hyperparams = BTreeMap::new();
        for kv in parts {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::InvalidHyperparam {
                family: family.into(),
                msg: format!("`{kv}` is not key=value"),
            })?;
            let value: f64 = v.parse().map_err(|_| Error::InvalidHyperparam {
                family: family.into(),
                msg: format!("bad value `{v}` for `{k}`"),
            })?;
            hyperparams.insert(k.to_string(), value);
        }
        let spec = Self {
            architecture_id: id,
            hyperparams,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// The built-in architecture set: five detector families, twelve
/// hyperparameter variants. The roster is fixed; per-model randomness comes
/// from the run seed at instantiation time.
pub fn builtin_arch_set() -> Vec<ArchitectureSpec> {
    use ArchitectureId::*;
    vec![
        ArchitectureSpec::new(ProjHist, &[("projections", 8.0), ("bins", 24.0)]),
        ArchitectureSpec::new(ProjHist, &[("projections", 16.0), ("bins", 48.0)]),
        ArchitectureSpec::new(ZScore, &[("decay", 0.02), ("clamp", 8.0)]),
        ArchitectureSpec::new(ZScore, &[("decay", 0.1), ("clamp", 8.0)]),
        ArchitectureSpec::new(ArForecast, &[("order", 2.0), ("lr", 0.1)]),
        ArchitectureSpec::new(ArForecast, &[("order", 8.0), ("lr", 0.05)]),
        ArchitectureSpec::new(ArForecast, &[("order", 16.0), ("lr", 0.02)]),
        ArchitectureSpec::new(IncPca, &[("window", 8.0), ("components", 2.0)]),
        ArchitectureSpec::new(IncPca, &[("window", 16.0), ("components", 3.0)]),
        ArchitectureSpec::new(WindowKnn, &[("window", 4.0), ("k", 3.0), ("reservoir", 1024.0)]),
        ArchitectureSpec::new(WindowKnn, &[("window", 8.0), ("k", 5.0), ("reservoir", 2048.0)]),
        ArchitectureSpec::new(WindowKnn, &[("window", 16.0), ("k", 5.0), ("reservoir", 1024.0)]),
    ]
}

// ---------------------------------------------------------------------------
// Model instances and the pool
// ---------------------------------------------------------------------------

/// A trained detector: architecture, hyperparameters and learned state.
pub struct ModelInstance {
    pub model_id: ModelId,
    pub spec: ArchitectureSpec,
    pub birth_batch: usize,
    detector: Box<dyn Detector>,
}

impl Clone for ModelInstance {
    fn clone(&self) -> Self {
        Self {
            model_id: self.model_id,
            spec: self.spec.clone(),
            birth_batch: self.birth_batch,
            detector: self.detector.box_clone(),
        }
    }
}

impl std::fmt::Debug for ModelInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelInstance")
            .field("model_id", &self.model_id)
            .field("family", &self.spec.architecture_id.key())
            .field("birth_batch", &self.birth_batch)
            .finish()
    }
}

impl ModelInstance {
    fn check_dimension(&self, batch: &Batch) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let got = batch.dimension();
        let expected = self.detector.dimension();
        if got != expected {
            return Err(Error::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    /// Scores a batch without touching the model state: the test-then-train
    /// chain runs on a clone.
    pub fn score_batch(&self, batch: &Batch) -> Result<Vec<f64>> {
        self.check_dimension(batch)?;
        let mut sim = self.detector.box_clone();
        Ok(batch.points.iter().map(|p| sim.step(&p.values)).collect())
    }

    /// Incrementally trains on the batch (the same chain scoring simulated).
    /// An empty batch is a no-op.
    pub fn update(&mut self, batch: &Batch) -> Result<()> {
        self.check_dimension(batch)?;
        for p in &batch.points {
            self.detector.step(&p.values);
        }
        Ok(())
    }

    /// Hash of the learned state; changes iff the model was trained.
    pub fn state_digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.detector.digest(&mut h);
        h.finish()
    }
}

/// Incrementally trains one model on a batch.
pub fn update_model(model: &mut ModelInstance, batch: &Batch) -> Result<()> {
    model.update(batch)
}

/// Allocates model ids and derives per-model seeds from the run seed.
#[derive(Debug, Clone)]
pub struct ModelFactory {
    run_seed: u64,
    next_id: u64,
}

impl ModelFactory {
    pub fn new(run_seed: u64) -> Self {
        Self {
            run_seed,
            next_id: 0,
        }
    }

    /// Instantiates one model per spec and trains each on the batch.
    /// Fails up front if the batch is shorter than any spec's warm-up.
    pub fn instantiate_and_train(
        &mut self,
        arch_set: &[ArchitectureSpec],
        batch: &Batch,
        birth_batch: usize,
    ) -> Result<Vec<ModelInstance>> {
        for spec in arch_set {
            spec.validate()?;
            if batch.len() < spec.warmup() {
                return Err(Error::BatchTooShortForWarmup {
                    len: batch.len(),
                    family: spec.architecture_id.key().into(),
                    needed: spec.warmup(),
                });
            }
        }
        let mut models = Vec::with_capacity(arch_set.len());
        for spec in arch_set {
            let model_id = ModelId(self.next_id);
            self.next_id += 1;
            let mut detector = spec.build(model_seed(self.run_seed, model_id));
            detector.fit(&batch.points);
            models.push(ModelInstance {
                model_id,
                spec: spec.clone(),
                birth_batch,
                detector,
            });
        }
        Ok(models)
    }
}

/// Convenience wrapper matching the one-shot "train the architecture set"
/// step: fresh factory, ids from zero.
pub fn instantiate_and_train(
    arch_set: &[ArchitectureSpec],
    batch: &Batch,
    run_seed: u64,
) -> Result<Vec<ModelInstance>> {
    ModelFactory::new(run_seed).instantiate_and_train(arch_set, batch, batch.batch_index)
}

/// The live, capacity-bounded collection of trained models.
#[derive(Debug, Clone)]
pub struct ModelPool {
    pub models: Vec<ModelInstance>,
    pub capacity: usize,
}

impl ModelPool {
    pub fn new(models: Vec<ModelInstance>, capacity: usize) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "pool needs at least 2 models, got {}",
                models.len()
            )));
        }
        if models.len() > capacity {
            return Err(Error::InvalidConfig(format!(
                "{} models exceed capacity {capacity}",
                models.len()
            )));
        }
        Ok(Self { models, capacity })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn ids(&self) -> Vec<ModelId> {
        self.models.iter().map(|m| m.model_id).collect()
    }

    pub fn get(&self, id: ModelId) -> Option<&ModelInstance> {
        self.models.iter().find(|m| m.model_id == id)
    }

    pub fn get_mut(&mut self, id: ModelId) -> Option<&mut ModelInstance> {
        self.models.iter_mut().find(|m| m.model_id == id)
    }

    /// Number of pool members per architecture family.
    pub fn family_counts(&self) -> BTreeMap<ArchitectureId, usize> {
        let mut counts = BTreeMap::new();
        for m in &self.models {
            *counts.entry(m.spec.architecture_id).or_insert(0) += 1;
        }
        counts
    }
}

/// Anomaly scores of one model over one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub model_id: ModelId,
    pub scores: Vec<f64>,
}

/// All score vectors for one batch, in pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub batch_index: usize,
    pub vectors: Vec<ScoreVector>,
}

impl ScoreSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Batch length covered by the vectors.
    pub fn point_count(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.scores.len())
    }

    pub fn get(&self, id: ModelId) -> Option<&[f64]> {
        self.vectors
            .iter()
            .find(|v| v.model_id == id)
            .map(|v| v.scores.as_slice())
    }

    pub fn model_ids(&self) -> Vec<ModelId> {
        self.vectors.iter().map(|v| v.model_id).collect()
    }
}

/// Scores the whole pool on a batch. Model state is untouched; vectors come
/// back in pool order.
pub fn score_pool(pool: &ModelPool, batch: &Batch) -> Result<ScoreSet> {
    #[cfg(feature = "parallel")]
    let vectors: Result<Vec<ScoreVector>> = {
        use rayon::prelude::*;
        pool.models
            .par_iter()
            .map(|m| {
                Ok(ScoreVector {
                    model_id: m.model_id,
                    scores: m.score_batch(batch)?,
                })
            })
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let vectors: Result<Vec<ScoreVector>> = pool
        .models
        .iter()
        .map(|m| {
            Ok(ScoreVector {
                model_id: m.model_id,
                scores: m.score_batch(batch)?,
            })
        })
        .collect();

    let vectors = vectors?;
    debug_assert!(vectors.iter().all(|v| v.scores.iter().all(|s| s.is_finite())));
    Ok(ScoreSet {
        batch_index: batch.batch_index,
        vectors,
    })
}

/// Trains a set of models on a batch, in parallel when enabled.
pub(crate) fn train_models(
    models: &mut [ModelInstance],
    ids: &[ModelId],
    batch: &Batch,
) -> Result<()> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        models
            .par_iter_mut()
            .filter(|m| ids.contains(&m.model_id))
            .map(|m| m.update(batch))
            .collect::<Result<Vec<_>>>()?;
    }
    #[cfg(not(feature = "parallel"))]
    {
        for m in models.iter_mut().filter(|m| ids.contains(&m.model_id)) {
            m.update(batch)?;
        }
    }
    Ok(())
}
