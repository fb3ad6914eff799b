//! Whole-stream orchestration: per batch, score the pool, build the model
//! graph, partition it, ensemble one representative per community, check
//! for structural drift, apply the matching pool update, and threshold the
//! final score into predictions.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde_json::json;

use crate::community::{louvain, Partition};
use crate::detectors::{score_pool, ArchitectureSpec, ModelFactory, ModelPool, ScoreSet};
use crate::drift::{
    centrality_drift, centrality_ranking, community_drift, drift_score, CentralityRanking,
    DriftScore,
};
use crate::ensemble::{ensemble, pseudo_ground_truth, select_representatives};
use crate::graph::{build_graph, positive_view, spearman_corr, ModelGraph};
use crate::pool::{major_update, minor_update, PoolLedger, UpdateKind, UpdateOutcome};
use crate::stats;
use crate::stream::{batch_iter, Batch, LabeledStream, Standardizer};
use crate::{Error, ModelId, Result};

/// Pipeline variants used for ablations. `Full` is the real thing; the
/// others bypass or degenerate one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Louvain communities, combined selection score.
    Full,
    /// The entire graph treated as one community.
    SingleCommunity,
    /// Selection by centrality alone (alpha forced to 1).
    CentralityOnly,
    /// Selection by pseudo-performance alone (alpha forced to 0).
    PseudoOnly,
    /// Every model is a representative: plain average ensemble.
    AverageEnsemble,
    /// One representative chosen from the whole graph.
    SingleBest,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "single_community" => Ok(Self::SingleCommunity),
            "centrality_only" => Ok(Self::CentralityOnly),
            "pseudo_only" => Ok(Self::PseudoOnly),
            "average_ensemble" => Ok(Self::AverageEnsemble),
            "single_best" => Ok(Self::SingleBest),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::SingleCommunity => "single_community",
            Self::CentralityOnly => "centrality_only",
            Self::PseudoOnly => "pseudo_only",
            Self::AverageEnsemble => "average_ensemble",
            Self::SingleBest => "single_best",
        }
    }

    /// The five modes compared by the ablation command.
    pub fn ablation_roster() -> [Mode; 5] {
        [
            Self::Full,
            Self::SingleCommunity,
            Self::CentralityOnly,
            Self::PseudoOnly,
            Self::AverageEnsemble,
        ]
    }
}

/// Score-to-prediction policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Flag scores above `mean + k * std` of the trailing history.
    RollingZScore { k: f64, window: usize },
    /// Flag scores above the `q`-quantile of the trailing history.
    Quantile { q: f64, window: usize },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::RollingZScore {
            k: 3.0,
            window: 2048,
        }
    }
}

/// All tunables of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub batch_size: usize,
    /// Balance between centrality and pseudo-performance in selection.
    pub alpha: f64,
    /// Balance between community drift and centrality drift.
    pub beta: f64,
    /// EMA weight of the newest short-term contribution score.
    pub gamma: f64,
    pub theta_drift: f64,
    pub resolution: f64,
    /// Pool capacity; defaults to `ceil(2.5 * |arch_set|)`.
    pub capacity: Option<usize>,
    pub damping: f64,
    pub pagerank_tol: f64,
    pub threshold: ThresholdPolicy,
    pub seed: u64,
    pub mode: Mode,
    pub standardize: bool,
    /// Attach per-batch graph snapshots to the results (edge dumps, demo).
    pub record_graphs: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.5,
            theta_drift: 0.3,
            resolution: 1.0,
            capacity: None,
            damping: 0.85,
            pagerank_tol: 1e-12,
            threshold: ThresholdPolicy::default(),
            seed: 7,
            mode: Mode::Full,
            standardize: true,
            record_graphs: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                Err(Error::InvalidConfig(format!("{name}={v} outside [0,1]")))
            } else {
                Ok(())
            }
        };
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        unit("gamma", self.gamma)?;
        if !(self.theta_drift > 0.0 && self.theta_drift < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "theta_drift={} outside (0,1)",
                self.theta_drift
            )));
        }
        if self.resolution <= 0.0 {
            return Err(Error::InvalidConfig("resolution must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidConfig("damping must lie in (0,1)".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::BatchSizeTooSmall(self.batch_size));
        }
        if let Some(c) = self.capacity {
            if c < 2 {
                return Err(Error::InvalidConfig("capacity must be at least 2".into()));
            }
        }
        match self.threshold {
            ThresholdPolicy::RollingZScore { k, window } => {
                if k <= 0.0 || window == 0 {
                    return Err(Error::InvalidConfig("bad rolling_zscore params".into()));
                }
            }
            ThresholdPolicy::Quantile { q, window } => {
                if !(0.0..1.0).contains(&q) || window == 0 {
                    return Err(Error::InvalidConfig("bad quantile params".into()));
                }
            }
        }
        Ok(())
    }

    /// Alpha after mode overrides.
    pub fn effective_alpha(&self) -> f64 {
        match self.mode {
            Mode::CentralityOnly => 1.0,
            Mode::PseudoOnly => 0.0,
            _ => self.alpha,
        }
    }

    pub fn capacity_for(&self, arch_count: usize) -> usize {
        self.capacity
            .unwrap_or_else(|| (arch_count as f64 * 2.5).ceil() as usize)
    }
}

/// Returns the config variant for an ablation mode; alpha is pinned for the
/// selection-strategy modes so the override is visible in the echoed config.
pub fn ablation_mode(config: &PipelineConfig, mode: Mode) -> PipelineConfig {
    let mut cfg = config.clone();
    cfg.mode = mode;
    match mode {
        Mode::CentralityOnly => cfg.alpha = 1.0,
        Mode::PseudoOnly => cfg.alpha = 0.0,
        _ => {}
    }
    cfg
}

// ---------------------------------------------------------------------------
// Thresholding
// ---------------------------------------------------------------------------

/// Flags scores against a history of past final scores; with an empty
/// history (first batch) the batch's own statistics stand in.
pub fn threshold(scores: &[f64], policy: &ThresholdPolicy, history: &[f64]) -> Vec<u8> {
    let basis: &[f64] = if history.is_empty() { scores } else { history };
    match *policy {
        ThresholdPolicy::RollingZScore { k, .. } => {
            let n = basis.len() as f64;
            let mean = basis.iter().sum::<f64>() / n;
            let sd = (basis.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            scores
                .iter()
                .map(|&s| {
                    let flagged = if sd > 1e-12 {
                        s > mean + k * sd
                    } else {
                        s > mean // degenerate history: flag only above the mean
                    };
                    flagged as u8
                })
                .collect()
        }
        ThresholdPolicy::Quantile { q, .. } => {
            let mut sorted = basis.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite score"));
            let pos = q * (sorted.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            let cut = sorted[lo] * (1.0 - (pos - lo as f64)) + sorted[hi] * (pos - lo as f64);
            scores.iter().map(|&s| (s > cut) as u8).collect()
        }
    }
}

/// Trailing-window threshold state; history is updated only after a batch
/// has been flagged.
#[derive(Debug, Clone)]
pub struct ThresholdState {
    policy: ThresholdPolicy,
    history: VecDeque<f64>,
}

impl ThresholdState {
    pub fn new(policy: ThresholdPolicy) -> Self {
        Self {
            policy,
            history: VecDeque::new(),
        }
    }

    pub fn apply(&mut self, scores: &[f64]) -> Vec<u8> {
        let (hist_a, hist_b) = self.history.as_slices();
        let history: Vec<f64> = hist_a.iter().chain(hist_b).copied().collect();
        let preds = threshold(scores, &self.policy, &history);

        let window = match self.policy {
            ThresholdPolicy::RollingZScore { window, .. } => window,
            ThresholdPolicy::Quantile { window, .. } => window,
        };
        for &s in scores {
            if self.history.len() == window {
                self.history.pop_front();
            }
            self.history.push_back(s);
        }
        preds
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Stream-level ROC-AUC (ties half); `None` when only one class occurs.
pub fn auc_metric(scores: &[f64], labels: &[bool]) -> Option<f64> {
    if scores.len() != labels.len() {
        return None;
    }
    stats::roc_auc(scores, labels)
}

/// Average detection time per step in milliseconds.
pub fn adt_metric(per_batch_elapsed: &[Duration], total_steps: usize) -> f64 {
    assert!(total_steps > 0, "adt over zero steps");
    let total_ms: f64 = per_batch_elapsed.iter().map(|d| d.as_secs_f64() * 1e3).sum();
    total_ms / total_steps as f64
}

// ---------------------------------------------------------------------------
// Run results
// ---------------------------------------------------------------------------

/// Optional per-batch graph payload for edge dumps and visualization.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GraphSnapshot {
    /// `(model_id, family_key)` per node.
    pub nodes: Vec<(u64, String)>,
    /// Raw signed Spearman edges `(i, j, weight)`.
    pub edges: Vec<(u64, u64, f64)>,
    pub communities: Vec<Vec<u64>>,
    pub representatives: Vec<u64>,
}

impl GraphSnapshot {
    /// `i j weight` edge-list text, one line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(a, b, w) in &self.edges {
            out.push_str(&format!("{a} {b} {w}\n"));
        }
        out
    }
}

/// Ledger excerpt recorded at drift batches.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LedgerSnapshot {
    /// Short-term scores that drove this drift's pruning.
    pub short_term: Vec<(u64, f64)>,
    /// Long-term scores after the EMA fold (newcomers absent: undefined).
    pub long_term: Vec<(u64, f64)>,
    /// Whether every representative counter was zero right after the major
    /// update finished.
    pub counters_reset: bool,
}

/// Everything produced for one scored batch.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub batch_index: usize,
    pub s_final: Vec<f64>,
    pub predictions: Vec<u8>,
    pub drift: DriftScore,
    pub representatives: Vec<ModelId>,
    pub community_sizes: Vec<usize>,
    pub update_kind: UpdateKind,
    pub pruned: Vec<ModelId>,
    pub added: Vec<ModelId>,
    pub pool_size: usize,
    pub alarm: bool,
    pub elapsed: Duration,
    pub ledger: Option<LedgerSnapshot>,
    pub graph: Option<GraphSnapshot>,
}

/// Pool composition at the end of a run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PoolSummary {
    pub size: usize,
    pub capacity: usize,
    pub families: BTreeMap<String, usize>,
}

/// Full run output: per-batch results plus stream-level metrics.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub stream_name: String,
    pub mode: Mode,
    pub seed: u64,
    pub batches: Vec<BatchResult>,
    pub auc: Option<f64>,
    pub adt_ms: f64,
    pub scored_steps: usize,
    pub drift_batches: Vec<usize>,
    pub final_pool: PoolSummary,
}

impl RunReport {
    pub fn alarm_count(&self) -> usize {
        self.batches.iter().filter(|b| b.alarm).count()
    }

    /// Concatenated final scores over all scored batches.
    pub fn all_scores(&self) -> Vec<f64> {
        self.batches
            .iter()
            .flat_map(|b| b.s_final.iter().copied())
            .collect()
    }

    /// Concatenated predictions over all scored batches.
    pub fn all_predictions(&self) -> Vec<u8> {
        self.batches
            .iter()
            .flat_map(|b| b.predictions.iter().copied())
            .collect()
    }

    /// One JSON record per scored batch.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for b in &self.batches {
            let mut record = json!({
                "t": b.batch_index,
                "d_cent": b.drift.d_cent,
                "d_comm": b.drift.d_comm,
                "drift": b.drift.combined,
                "drifted": b.drift.drifted,
                "update": match b.update_kind {
                    UpdateKind::Major => "major",
                    UpdateKind::Minor => "minor",
                },
                "communities": b.community_sizes,
                "representatives": b.representatives.iter().map(|id| id.0).collect::<Vec<_>>(),
                "pruned": b.pruned.iter().map(|id| id.0).collect::<Vec<_>>(),
                "added": b.added.iter().map(|id| id.0).collect::<Vec<_>>(),
                "pool_size": b.pool_size,
                "alarm": b.alarm,
                "n_flagged": b.predictions.iter().filter(|&&p| p == 1).count(),
                "predictions": b.predictions,
                "s_final": b.s_final,
                "elapsed_ms": b.elapsed.as_secs_f64() * 1e3,
            });
            let map = record.as_object_mut().expect("record is an object");
            if let Some(ledger) = &b.ledger {
                map.insert("ledger".into(), serde_json::to_value(ledger).expect("serializable"));
            }
            if let Some(graph) = &b.graph {
                map.insert("graph".into(), serde_json::to_value(graph).expect("serializable"));
            }
            out.push_str(&record.to_string());
            out.push('\n');
        }
        out
    }

    /// Stream-level summary as a JSON value.
    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "stream": self.stream_name,
            "mode": self.mode.name(),
            "seed": self.seed,
            "auc": self.auc,
            "adt_ms": self.adt_ms,
            "scored_steps": self.scored_steps,
            "scored_batches": self.batches.len(),
            "alarms": self.alarm_count(),
            "drift_batches": self.drift_batches,
            "final_pool": self.final_pool,
        })
    }
}

// ---------------------------------------------------------------------------
// The run loop
// ---------------------------------------------------------------------------

/// Asserts the test-then-train ordering within one batch: all scores are
/// produced before any model parameter update.
struct PhaseGuard {
    batch_index: usize,
    scored: bool,
    updated: bool,
}

impl PhaseGuard {
    fn new(batch_index: usize) -> Self {
        Self {
            batch_index,
            scored: false,
            updated: false,
        }
    }

    fn mark_scored(&mut self) {
        assert!(
            !self.scored && !self.updated,
            "batch {}: pool scored twice",
            self.batch_index
        );
        self.scored = true;
    }

    fn mark_updating(&mut self) {
        assert!(
            self.scored && !self.updated,
            "batch {}: model update before scoring finished",
            self.batch_index
        );
        self.updated = true;
    }
}

fn partition_for(mode: Mode, graph: &ModelGraph, resolution: f64) -> Partition {
    match mode {
        Mode::Full | Mode::CentralityOnly | Mode::PseudoOnly => {
            louvain(graph, resolution, None)
        }
        Mode::SingleCommunity | Mode::SingleBest => Partition::single(graph, resolution),
        Mode::AverageEnsemble => Partition::singletons(graph, resolution),
    }
}

fn snapshot_graph(
    graph: &ModelGraph,
    pool: &ModelPool,
    partition: &Partition,
    reps: &[ModelId],
) -> GraphSnapshot {
    GraphSnapshot {
        nodes: graph
            .nodes
            .iter()
            .map(|&id| {
                let family = pool
                    .get(id)
                    .map(|m| m.spec.architecture_id.key().to_string())
                    .unwrap_or_default();
                (id.0, family)
            })
            .collect(),
        edges: graph.edges.iter().map(|&(a, b, w)| (a.0, b.0, w)).collect(),
        communities: partition
            .communities
            .iter()
            .map(|c| c.iter().map(|id| id.0).collect())
            .collect(),
        representatives: reps.iter().map(|id| id.0).collect(),
    }
}

/// Runs the full detection loop over a stream. The first batch only trains
/// the initial pool and is never scored; evaluation covers batches `1..`.
pub fn run(
    stream: &LabeledStream,
    arch_set: &[ArchitectureSpec],
    config: &PipelineConfig,
) -> Result<RunReport> {
    config.validate()?;
    if arch_set.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least 2 architectures in the set".into(),
        ));
    }
    if stream.len() < 2 * config.batch_size {
        return Err(Error::StreamTooShort {
            len: stream.len(),
            batch_size: config.batch_size,
            msg: "need at least two batches (initial training plus one scored)".into(),
        });
    }

    let batches = batch_iter(stream, config.batch_size)?;
    let mut standardizer = Standardizer::new(stream.dimension);
    let prepare = |standardizer: &mut Standardizer, batch: &Batch| -> Batch {
        if config.standardize {
            standardizer.standardize_batch(batch)
        } else {
            batch.clone()
        }
    };

    // initial pool from B0; B0 is never scored
    let b0 = prepare(&mut standardizer, &batches[0]);
    let mut factory = ModelFactory::new(config.seed);
    let initial = factory.instantiate_and_train(arch_set, &b0, 0)?;
    let capacity = config.capacity_for(arch_set.len());
    let mut pool = ModelPool::new(initial, capacity)?;
    let mut ledger = PoolLedger::new(config.gamma, &pool.ids());

    let mut threshold_state = ThresholdState::new(config.threshold);
    let mut prev_ranking: Option<CentralityRanking> = None;
    let mut prev_partition: Option<Partition> = None;

    let mut results: Vec<BatchResult> = Vec::with_capacity(batches.len() - 1);
    let mut all_labels: Vec<Option<bool>> = Vec::new();
    let mut drift_batches = Vec::new();

    for raw_batch in &batches[1..] {
        let t = raw_batch.batch_index;
        let batch = prepare(&mut standardizer, raw_batch);
        let mut phase = PhaseGuard::new(t);

        let started = Instant::now();

        // scoring uses the pool state left by batch t-1
        let scores: ScoreSet = score_pool(&pool, &batch)?;
        phase.mark_scored();

        let corr = spearman_corr(&scores)?;
        let graph = build_graph(&corr);
        let pos = positive_view(&graph);

        let partition = partition_for(config.mode, &pos, config.resolution);
        assert!(
            partition.is_valid_for(&pos.nodes),
            "batch {t}: partition does not cover the pool"
        );

        let pseudo = pseudo_ground_truth(&scores);
        let reps = select_representatives(
            &pos,
            &partition,
            &scores,
            &pseudo,
            config.effective_alpha(),
            config.damping,
            config.pagerank_tol,
        )?;
        let s_final = ensemble(&reps, &scores)?;

        let ranking = centrality_ranking(&pos, config.damping, config.pagerank_tol)?;
        let drift = match (&prev_ranking, &prev_partition) {
            (None, _) | (_, None) => DriftScore::initial(t),
            (Some(pr), Some(pp)) => {
                match (centrality_drift(pr, &ranking), community_drift(pp, &partition)) {
                    (Some(d_cent), Some(d_comm)) => {
                        drift_score(t, d_comm, d_cent, config.beta, config.theta_drift)
                    }
                    // node sets too disjoint to compare: conservative
                    _ => DriftScore::incomparable(t),
                }
            }
        };
        debug_assert!(
            (0.0..=1.0).contains(&drift.d_cent)
                && (0.0..=1.0).contains(&drift.d_comm)
                && (0.0..=1.0).contains(&drift.combined),
            "batch {t}: drift signals out of range"
        );

        phase.mark_updating();
        let mut cs_at_drift: Option<BTreeMap<ModelId, f64>> = None;
        let outcome: UpdateOutcome = if drift.drifted {
            drift_batches.push(t);
            cs_at_drift = Some(ledger.short_term_scores());
            major_update(&mut pool, &mut ledger, &mut factory, arch_set, &batch, t)?
        } else {
            // the counter tracks representatives of stable batches only
            ledger.record_representatives(&reps)?;
            minor_update(&mut pool, &reps, &batch)?
        };
        assert!(
            pool.len() <= capacity,
            "batch {t}: pool size {} exceeds capacity {capacity}",
            pool.len()
        );

        let predictions = threshold_state.apply(&s_final.scores);
        let elapsed = started.elapsed();

        let alarm = predictions.contains(&1);
        let ledger_snapshot = cs_at_drift.map(|cs| LedgerSnapshot {
            short_term: cs.into_iter().map(|(id, v)| (id.0, v)).collect(),
            long_term: ledger
                .long_term
                .iter()
                .filter_map(|(id, v)| v.map(|s| (id.0, s)))
                .collect(),
            counters_reset: ledger.rep_counts.values().all(|&c| c == 0),
        });
        let graph_snapshot = config
            .record_graphs
            .then(|| snapshot_graph(&graph, &pool, &partition, &reps.members));

        all_labels.extend(batch.labels());
        results.push(BatchResult {
            batch_index: t,
            s_final: s_final.scores,
            predictions,
            drift,
            representatives: reps.members.clone(),
            community_sizes: partition.community_sizes(),
            update_kind: outcome.kind,
            pruned: outcome.pruned,
            added: outcome.added,
            pool_size: pool.len(),
            alarm,
            elapsed,
            ledger: ledger_snapshot,
            graph: graph_snapshot,
        });

        prev_ranking = Some(ranking);
        prev_partition = Some(partition);
    }

    let scored_steps: usize = results.iter().map(|b| b.s_final.len()).sum();
    let auc = if all_labels.iter().all(|l| l.is_some()) {
        let labels: Vec<bool> = all_labels.iter().map(|l| l.unwrap()).collect();
        let scores: Vec<f64> = results
            .iter()
            .flat_map(|b| b.s_final.iter().copied())
            .collect();
        auc_metric(&scores, &labels)
    } else {
        None
    };
    let elapsed: Vec<Duration> = results.iter().map(|b| b.elapsed).collect();
    let adt_ms = adt_metric(&elapsed, scored_steps);

    let families = pool
        .family_counts()
        .into_iter()
        .map(|(id, n)| (id.key().to_string(), n))
        .collect();

    Ok(RunReport {
        stream_name: stream.name.clone(),
        mode: config.mode,
        seed: config.seed,
        batches: results,
        auc,
        adt_ms,
        scored_steps,
        drift_batches,
        final_pool: PoolSummary {
            size: pool.len(),
            capacity,
            families,
        },
    })
}

/// Prequential baseline for one architecture: train on the first batch,
/// then score-and-train on every subsequent batch. Returns the stream AUC
/// of the raw score sequence.
pub fn single_detector_auc(
    stream: &LabeledStream,
    spec: &ArchitectureSpec,
    config: &PipelineConfig,
) -> Result<Option<f64>> {
    let batches = batch_iter(stream, config.batch_size)?;
    if batches.len() < 2 {
        return Err(Error::StreamTooShort {
            len: stream.len(),
            batch_size: config.batch_size,
            msg: "need at least two batches".into(),
        });
    }
    let mut standardizer = Standardizer::new(stream.dimension);
    let prepare = |standardizer: &mut Standardizer, batch: &Batch| -> Batch {
        if config.standardize {
            standardizer.standardize_batch(batch)
        } else {
            batch.clone()
        }
    };
    let b0 = prepare(&mut standardizer, &batches[0]);
    let mut models =
        ModelFactory::new(config.seed).instantiate_and_train(std::slice::from_ref(spec), &b0, 0)?;
    let model = &mut models[0];

    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for raw in &batches[1..] {
        let batch = prepare(&mut standardizer, raw);
        scores.extend(model.score_batch(&batch)?);
        model.update(&batch)?;
        labels.extend(batch.labels());
    }
    if labels.iter().any(|l| l.is_none()) {
        return Ok(None);
    }
    let labels: Vec<bool> = labels.into_iter().map(|l| l.unwrap()).collect();
    Ok(auc_metric(&scores, &labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::builtin_arch_set;
    use crate::stream::{synth_stream, SynthConfig};

    fn small_stream(seed: u64) -> LabeledStream {
        synth_stream(&SynthConfig {
            length: 1280,
            anomaly_rate: 0.02,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            batch_size: 128,
            ..Default::default()
        }
    }

    #[test]
    fn first_batch_is_training_only() {
        let stream = small_stream(3);
        let report = run(&stream, &builtin_arch_set(), &small_config()).unwrap();
        // 10 batches of 128: batch 0 trains, batches 1..=9 are scored
        assert_eq!(report.batches.len(), 9);
        assert_eq!(report.batches[0].batch_index, 1);
        assert_eq!(report.scored_steps, 9 * 128);
        assert_eq!(report.scored_steps, report.all_scores().len());
        assert_eq!(report.all_predictions().len(), report.scored_steps);
    }

    #[test]
    fn unreachable_threshold_means_no_major_updates() {
        let stream = small_stream(3);
        let mut cfg = small_config();
        cfg.theta_drift = 0.9999;
        let report = run(&stream, &builtin_arch_set(), &cfg).unwrap();
        assert!(report.drift_batches.is_empty());
        assert!(report
            .batches
            .iter()
            .all(|b| b.update_kind == UpdateKind::Minor));
        // pool membership never changed
        assert!(report.batches.iter().all(|b| b.pool_size == 12));
    }

    #[test]
    fn identical_seeds_give_identical_reports() {
        let stream = small_stream(5);
        let cfg = small_config();
        let a = run(&stream, &builtin_arch_set(), &cfg).unwrap();
        let b = run(&stream, &builtin_arch_set(), &cfg).unwrap();
        assert_eq!(a.all_predictions(), b.all_predictions());
        let bits = |r: &RunReport| -> Vec<u64> {
            r.all_scores().iter().map(|s| s.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.drift_batches, b.drift_batches);
    }

    #[test]
    fn threshold_examples() {
        // history mean 0, sd 1, k=3: only 3.5 is flagged
        let history: Vec<f64> = (0..1000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let policy = ThresholdPolicy::RollingZScore { k: 3.0, window: 2048 };
        assert_eq!(threshold(&[0.5, 3.5], &policy, &history), vec![0, 1]);

        // degenerate flat history: only scores above the mean flag
        let flat = vec![2.0; 100];
        assert_eq!(threshold(&[2.0, 2.1], &policy, &flat), vec![0, 1]);

        // quantile policy: median of 1..=100 is 50.5
        let policy = ThresholdPolicy::Quantile { q: 0.5, window: 2048 };
        let hist: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(threshold(&[51.0, 50.0], &policy, &hist), vec![1, 0]);
    }

    #[test]
    fn threshold_state_flags_against_trailing_history() {
        let mut st = ThresholdState::new(ThresholdPolicy::RollingZScore { k: 3.0, window: 256 });
        // first batch falls back to its own statistics
        let mut batch = vec![0.0; 100];
        batch[40] = 10.0;
        let first = st.apply(&batch);
        assert_eq!(first[40], 1);
        assert_eq!(first.iter().filter(|&&p| p == 1).count(), 1);
        // later batches flag against the trailing history
        let preds = st.apply(&[0.0, 50.0]);
        assert_eq!(preds, vec![0, 1]);
    }

    #[test]
    fn adt_identity() {
        let elapsed = vec![Duration::from_millis(50), Duration::from_millis(150)];
        let adt = adt_metric(&elapsed, 200);
        assert!((adt - 1.0).abs() < 1e-9);
        // ADT * steps reproduces the summed elapsed time
        assert!((adt * 200.0 - 200.0).abs() / 200.0 < 0.01);
    }

    #[test]
    fn ablation_modes_change_the_right_knob() {
        let cfg = small_config();
        assert_eq!(ablation_mode(&cfg, Mode::CentralityOnly).effective_alpha(), 1.0);
        assert_eq!(ablation_mode(&cfg, Mode::PseudoOnly).effective_alpha(), 0.0);

        let stream = small_stream(4);
        let avg = run(&stream, &builtin_arch_set(), &ablation_mode(&cfg, Mode::AverageEnsemble))
            .unwrap();
        // every model is a representative on every batch
        for b in &avg.batches {
            assert_eq!(b.representatives.len(), b.pool_size);
            assert!(b.community_sizes.iter().all(|&s| s == 1));
        }

        let single =
            run(&stream, &builtin_arch_set(), &ablation_mode(&cfg, Mode::SingleCommunity))
                .unwrap();
        for b in &single.batches {
            assert_eq!(b.community_sizes.len(), 1);
            assert_eq!(b.representatives.len(), 1);
        }
    }

    #[test]
    fn alarm_soundness() {
        let stream = small_stream(6);
        let report = run(&stream, &builtin_arch_set(), &small_config()).unwrap();
        for b in &report.batches {
            assert_eq!(b.alarm, b.predictions.iter().any(|&p| p == 1));
        }
    }

    #[test]
    fn jsonl_has_documented_keys() {
        let stream = small_stream(3);
        let mut cfg = small_config();
        cfg.record_graphs = true;
        let report = run(&stream, &builtin_arch_set(), &cfg).unwrap();
        let jsonl = report.to_jsonl();
        for line in jsonl.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            for key in [
                "t", "d_cent", "d_comm", "drift", "drifted", "update", "communities",
                "representatives", "pruned", "added", "pool_size", "alarm", "n_flagged",
                "predictions", "s_final", "elapsed_ms", "graph",
            ] {
                assert!(v.get(key).is_some(), "missing key {key}");
            }
        }
        let summary = report.summary_json();
        for key in [
            "stream", "mode", "seed", "auc", "adt_ms", "scored_steps", "scored_batches",
            "alarms", "drift_batches", "final_pool",
        ] {
            assert!(summary.get(key).is_some(), "missing summary key {key}");
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = PipelineConfig::default();
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.theta_drift = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.resolution = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }

    #[test]
    fn stream_too_short_is_rejected() {
        let stream = synth_stream(&SynthConfig {
            length: 200,
            ..Default::default()
        })
        .unwrap();
        let cfg = PipelineConfig {
            batch_size: 128,
            ..Default::default()
        };
        assert!(matches!(
            run(&stream, &builtin_arch_set(), &cfg),
            Err(Error::StreamTooShort { .. })
        ));
    }
}
