//! Pool lifecycle: representative counters, short/long-term contribution
//! scores, pruning, and the major/minor update paths.

use std::collections::{BTreeMap, BTreeSet};

use crate::detectors::{train_models, ArchitectureSpec, ModelFactory, ModelPool};
use crate::ensemble::RepresentativeSet;
use crate::stream::Batch;
use crate::{Error, ModelId, Result};

/// Per-model contribution bookkeeping. `rep_counts` counts representative
/// selections on stable batches since the last drift; `long_term` is the
/// EMA contribution score, `None` until the model survives its first drift.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolLedger {
    pub gamma: f64,
    pub rep_counts: BTreeMap<ModelId, u64>,
    pub long_term: BTreeMap<ModelId, Option<f64>>,
    pub last_drift_batch: usize,
}

impl PoolLedger {
    pub fn new(gamma: f64, ids: &[ModelId]) -> Self {
        Self {
            gamma,
            rep_counts: ids.iter().map(|&id| (id, 0)).collect(),
            long_term: ids.iter().map(|&id| (id, None)).collect(),
            last_drift_batch: 0,
        }
    }

    /// Bumps the counter of every representative of a stable batch.
    pub fn record_representatives(&mut self, reps: &RepresentativeSet) -> Result<()> {
        if reps.members.is_empty() {
            return Err(Error::EmptyRepresentatives);
        }
        for &id in &reps.members {
            let count = self
                .rep_counts
                .get_mut(&id)
                .ok_or(Error::UnknownModel(id))?;
            *count += 1;
        }
        Ok(())
    }

    /// Short-term contribution scores `cs_j = n_j / sum_k n_k`. With no
    /// stable batch since the last drift (all counters zero) there is no
    /// evidence to rank models, so the scores fall back to uniform.
    pub fn short_term_scores(&self) -> BTreeMap<ModelId, f64> {
        let total: u64 = self.rep_counts.values().sum();
        if total == 0 {
            let m = self.rep_counts.len() as f64;
            return self.rep_counts.keys().map(|&id| (id, 1.0 / m)).collect();
        }
        self.rep_counts
            .iter()
            .map(|(&id, &n)| (id, n as f64 / total as f64))
            .collect()
    }

    /// Folds short-term scores into the long-term EMA. Models in
    /// `newcomers` (or still undefined) are initialized to their `cs`;
    /// everyone else gets `gamma*cs + (1-gamma)*prev`. Counters reset.
    pub fn update_long_term(
        &mut self,
        cs: &BTreeMap<ModelId, f64>,
        newcomers: &BTreeSet<ModelId>,
    ) {
        for (&id, slot) in self.long_term.iter_mut() {
            let cs_j = cs.get(&id).copied().unwrap_or(0.0);
            *slot = Some(match *slot {
                Some(prev) if !newcomers.contains(&id) => {
                    self.gamma * cs_j + (1.0 - self.gamma) * prev
                }
                _ => cs_j,
            });
        }
        for count in self.rep_counts.values_mut() {
            *count = 0;
        }
    }

    /// Ids whose long-term score is still undefined (added at the most
    /// recent drift, or never through one).
    pub fn undefined_ids(&self) -> BTreeSet<ModelId> {
        self.long_term
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(&id, _)| id)
            .collect()
    }

    fn register(&mut self, id: ModelId) {
        self.rep_counts.insert(id, 0);
        self.long_term.insert(id, None);
    }

    fn drop_model(&mut self, id: ModelId) {
        self.rep_counts.remove(&id);
        self.long_term.remove(&id);
    }
}

/// How a batch updated the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Major,
    Minor,
}

/// Outcome of a major or minor update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub kind: UpdateKind,
    pub pruned: Vec<ModelId>,
    pub added: Vec<ModelId>,
    pub trained: Vec<ModelId>,
}

/// Number of models that must leave before refreshing the pool:
/// `max(0, pool_size + arch_count - capacity)`.
pub fn n_exceed(pool_size: usize, arch_count: usize, capacity: usize) -> usize {
    (pool_size + arch_count).saturating_sub(capacity)
}

/// Removes up to `count` models with the smallest defined long-term scores
/// (ties pruned lowest id first). Models with undefined scores are exempt:
/// they have no track record to be judged on yet. Returns the pruned ids;
/// fewer than `count` when not enough models are eligible.
pub fn prune(pool: &mut ModelPool, ledger: &mut PoolLedger, count: usize) -> Vec<ModelId> {
    let mut eligible: Vec<(f64, ModelId)> = ledger
        .long_term
        .iter()
        .filter_map(|(&id, v)| v.map(|score| (score, id)))
        .collect();
    eligible.sort_by(|(sa, ida), (sb, idb)| {
        sa.partial_cmp(sb).expect("finite score").then(ida.cmp(idb))
    });

    if eligible.len() < count {
        log::warn!(
            "prune shortfall: wanted {count}, only {} models have defined scores",
            eligible.len()
        );
    }
    let pruned: Vec<ModelId> = eligible
        .into_iter()
        .take(count)
        .map(|(_, id)| id)
        .collect();
    for &id in &pruned {
        ledger.drop_model(id);
        pool.models.retain(|m| m.model_id != id);
    }
    pruned
}

/// When pruning could not free enough room, drop newcomer specs from the
/// families that already crowd the pool (largest family first, later spec
/// first) until the additions fit.
fn trim_arch_set(
    arch_set: &[ArchitectureSpec],
    pool: &ModelPool,
    allowed: usize,
) -> Vec<ArchitectureSpec> {
    let mut kept: Vec<ArchitectureSpec> = arch_set.to_vec();
    let mut family_counts = pool.family_counts();
    while kept.len() > allowed {
        let crowded = kept
            .iter()
            .map(|s| {
                family_counts.get(&s.architecture_id).copied().unwrap_or(0)
                    + kept
                        .iter()
                        .filter(|o| o.architecture_id == s.architecture_id)
                        .count()
            })
            .enumerate()
            .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ia.cmp(ib)))
            .map(|(i, _)| i)
            .expect("kept is nonempty");
        let dropped = kept.remove(crowded);
        log::warn!(
            "capacity shortfall: skipping newcomer of family {}",
            dropped.architecture_id.key()
        );
        family_counts.entry(dropped.architecture_id).or_insert(0);
    }
    kept
}

/// Major update on a drift batch, in order: fold counters into long-term
/// scores, prune the overflow per the capacity rule, incrementally train
/// every survivor on the batch, then instantiate and train one newcomer
/// per architecture (undefined long-term score).
pub fn major_update(
    pool: &mut ModelPool,
    ledger: &mut PoolLedger,
    factory: &mut ModelFactory,
    arch_set: &[ArchitectureSpec],
    batch: &Batch,
    batch_index: usize,
) -> Result<UpdateOutcome> {
    let cs = ledger.short_term_scores();
    let newcomers = ledger.undefined_ids();
    ledger.update_long_term(&cs, &newcomers);
    ledger.last_drift_batch = batch_index;

    let overflow = n_exceed(pool.len(), arch_set.len(), pool.capacity);
    let pruned = prune(pool, ledger, overflow);
    let shortfall = overflow - pruned.len();

    let survivors: Vec<ModelId> = pool.ids();
    train_models(&mut pool.models, &survivors, batch)?;

    let specs = if shortfall > 0 {
        trim_arch_set(arch_set, pool, arch_set.len() - shortfall)
    } else {
        arch_set.to_vec()
    };
    let new_models = factory.instantiate_and_train(&specs, batch, batch_index)?;
    let added: Vec<ModelId> = new_models.iter().map(|m| m.model_id).collect();
    for model in new_models {
        ledger.register(model.model_id);
        pool.models.push(model);
    }

    assert!(
        pool.len() <= pool.capacity,
        "pool {} exceeds capacity {} after major update at batch {batch_index}",
        pool.len(),
        pool.capacity
    );
    Ok(UpdateOutcome {
        kind: UpdateKind::Major,
        pruned,
        added,
        trained: survivors,
    })
}

/// Minor update on a stable batch: only the representatives are trained;
/// membership and every other model's state stay untouched.
pub fn minor_update(
    pool: &mut ModelPool,
    reps: &RepresentativeSet,
    batch: &Batch,
) -> Result<UpdateOutcome> {
    for &id in &reps.members {
        if pool.get(id).is_none() {
            return Err(Error::UnknownModel(id));
        }
    }
    train_models(&mut pool.models, &reps.members, batch)?;
    Ok(UpdateOutcome {
        kind: UpdateKind::Minor,
        pruned: Vec::new(),
        added: Vec::new(),
        trained: reps.members.clone(),
    })
}
