//! Community-based ensembling: per-model GMM binarization aggregated into a
//! pseudo-ground truth, pseudo-performance AUC, representative selection by
//! combined centrality + pseudo-performance, and the averaged final score.

use std::collections::BTreeMap;

use crate::community::{pagerank, Partition};
use crate::detectors::ScoreSet;
use crate::graph::ModelGraph;
use crate::stats;
use crate::{Error, ModelId, Result};

const GMM_MAX_ITERS: usize = 100;
const GMM_LOGLIK_TOL: f64 = 1e-6;
const GMM_VAR_FLOOR: f64 = 1e-12;
const GMM_MEAN_SEP: f64 = 1e-9;

/// Batch-level surrogate anomaly labels from majority voting.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    pub batch_index: usize,
    pub labels: Vec<bool>,
}

/// One selected model per community plus the combined selection scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSet {
    pub batch_index: usize,
    /// Representative of community `i` at position `i`.
    pub members: Vec<ModelId>,
    /// Combined score `h = alpha * centrality + (1 - alpha) * pseudo_auc`
    /// for every model.
    pub combined_scores: BTreeMap<ModelId, f64>,
}

/// Final per-batch ensemble score.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleScore {
    pub batch_index: usize,
    pub scores: Vec<f64>,
}

// ---------------------------------------------------------------------------
// 1-D two-component Gaussian mixture
// ---------------------------------------------------------------------------

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

/// Fits a two-component mixture by EM (percentile-based initialization,
/// shared starting variance) and flags the points assigned to the
/// higher-mean component. Returns `None` for a constant vector or when the
/// fitted means collapse onto each other.
pub fn gmm_binarize(scores: &[f64]) -> Option<Vec<bool>> {
    let n = scores.len();
    if n < 2 {
        return None;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite score"));
    if sorted[n - 1] - sorted[0] <= 0.0 {
        return None;
    }

    let global_mean = scores.iter().sum::<f64>() / n as f64;
    let global_var = scores
        .iter()
        .map(|x| (x - global_mean).powi(2))
        .sum::<f64>()
        / n as f64;

    let mut means = [quantile(&sorted, 0.25), quantile(&sorted, 0.90)];
    let mut vars = [global_var.max(GMM_VAR_FLOOR); 2];
    let mut weights = [0.5f64; 2];

    let mut resp_hi = vec![0.0; n];
    let mut prev_loglik = f64::NEG_INFINITY;
    for _ in 0..GMM_MAX_ITERS {
        // E-step in log space
        let mut loglik = 0.0;
        for (i, &x) in scores.iter().enumerate() {
            let l0 = weights[0].max(1e-12).ln() + log_normal_pdf(x, means[0], vars[0]);
            let l1 = weights[1].max(1e-12).ln() + log_normal_pdf(x, means[1], vars[1]);
            let m = l0.max(l1);
            let z = (l0 - m).exp() + (l1 - m).exp();
            resp_hi[i] = (l1 - m).exp() / z;
            loglik += m + z.ln();
        }
        if (loglik - prev_loglik).abs() < GMM_LOGLIK_TOL {
            break;
        }
        prev_loglik = loglik;

        // M-step
        let r1: f64 = resp_hi.iter().sum();
        let r0 = n as f64 - r1;
        for (comp, r_sum) in [(0usize, r0), (1usize, r1)] {
            if r_sum < 1e-9 {
                continue; // collapsed component keeps its parameters
            }
            let resp = |i: usize| if comp == 1 { resp_hi[i] } else { 1.0 - resp_hi[i] };
            let mean = scores
                .iter()
                .enumerate()
                .map(|(i, &x)| resp(i) * x)
                .sum::<f64>()
                / r_sum;
            let var = scores
                .iter()
                .enumerate()
                .map(|(i, &x)| resp(i) * (x - mean).powi(2))
                .sum::<f64>()
                / r_sum;
            means[comp] = mean;
            vars[comp] = var.max(GMM_VAR_FLOOR);
            weights[comp] = r_sum / n as f64;
        }
    }

    if (means[0] - means[1]).abs() < GMM_MEAN_SEP {
        return None;
    }
    // flag points assigned to the higher-mean component
    let hi_is_1 = means[1] > means[0];
    Some(
        resp_hi
            .iter()
            .map(|&r| if hi_is_1 { r > 0.5 } else { r < 0.5 })
            .collect(),
    )
}

/// Majority-vote pseudo-ground truth over all models' GMM binarizations.
/// A point is flagged when strictly more than half of the pool flags it;
/// models with degenerate fits vote for nothing.
pub fn pseudo_ground_truth(score_set: &ScoreSet) -> PseudoLabels {
    let n = score_set.point_count();
    let m = score_set.len();
    let mut votes = vec![0usize; n];
    for v in &score_set.vectors {
        if let Some(flags) = gmm_binarize(&v.scores) {
            for (count, flag) in votes.iter_mut().zip(flags) {
                if flag {
                    *count += 1;
                }
            }
        }
    }
    PseudoLabels {
        batch_index: score_set.batch_index,
        labels: votes.into_iter().map(|c| 2 * c > m).collect(),
    }
}

/// ROC-AUC of a score vector against the pseudo-ground truth; 0.5 when the
/// pseudo labels are single-class (no ranking information).
pub fn pseudo_performance(scores: &[f64], pseudo: &PseudoLabels) -> Result<f64> {
    if scores.len() != pseudo.labels.len() {
        return Err(Error::LengthMismatch(scores.len(), pseudo.labels.len()));
    }
    Ok(stats::roc_auc(scores, &pseudo.labels).unwrap_or(0.5))
}

/// Selects one representative per community: PageRank on the induced
/// subgraph, min-max normalized within the community (a lone node gets 1),
/// combined with pseudo-performance as `h = alpha*c + (1-alpha)*q`; the
/// within-community argmax wins, ties to the lower model id.
pub fn select_representatives(
    graph: &ModelGraph,
    partition: &Partition,
    score_set: &ScoreSet,
    pseudo: &PseudoLabels,
    alpha: f64,
    damping: f64,
    pagerank_tol: f64,
) -> Result<RepresentativeSet> {
    debug_assert!(partition.is_valid_for(&graph.nodes), "partition must cover the graph");

    let mut combined_scores = BTreeMap::new();
    let mut members = Vec::with_capacity(partition.communities.len());

    for community in &partition.communities {
        let sub = graph.induced(community);
        let centrality = pagerank(&sub, damping, pagerank_tol)?;

        let c_min = centrality.values().cloned().fold(f64::INFINITY, f64::min);
        let c_max = centrality
            .values()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let span = c_max - c_min;

        let mut best: Option<(ModelId, f64)> = None;
        for &id in community {
            let c = if span > 1e-15 {
                (centrality[&id] - c_min) / span
            } else {
                1.0 // equal centrality everywhere, including singletons
            };
            let scores = score_set
                .get(id)
                .ok_or(Error::MissingRepresentativeScores(id))?;
            let q = pseudo_performance(scores, pseudo)?;
            let h = alpha * c + (1.0 - alpha) * q;
            combined_scores.insert(id, h);
            // strict comparison keeps the lowest id on ties
            if best.as_ref().is_none_or(|&(_, bh)| h > bh) {
                best = Some((id, h));
            }
        }
        members.push(best.expect("community is nonempty").0);
    }

    Ok(RepresentativeSet {
        batch_index: partition.batch_index,
        members,
        combined_scores,
    })
}

/// Averages the representatives' z-normalized batch scores with equal
/// weights. Constant vectors normalize to zeros.
pub fn ensemble(reps: &RepresentativeSet, score_set: &ScoreSet) -> Result<EnsembleScore> {
    if reps.members.is_empty() {
        return Err(Error::EmptyRepresentatives);
    }
    let n = score_set.point_count();
    let mut sum = vec![0.0; n];
    for &id in &reps.members {
        let scores = score_set
            .get(id)
            .ok_or(Error::MissingRepresentativeScores(id))?;
        for (acc, z) in sum.iter_mut().zip(stats::z_normalize(scores)) {
            *acc += z;
        }
    }
    let k = reps.members.len() as f64;
    Ok(EnsembleScore {
        batch_index: score_set.batch_index,
        scores: sum.into_iter().map(|s| s / k).collect(),
    })
}
