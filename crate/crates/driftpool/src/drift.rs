//! Graph-structural concept drift: Kendall distance between consecutive
//! centrality rankings plus NMI distance between consecutive partitions,
//! combined into a single thresholded drift score.

use std::collections::BTreeMap;

use crate::community::{pagerank, Partition};
use crate::graph::ModelGraph;
use crate::stats;
use crate::{ModelId, Result};

/// Whole-graph centrality ranking; rank 1 is the most central node. Ties in
/// the underlying PageRank values resolve to distinct ranks by ascending
/// model id.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityRanking {
    pub batch_index: usize,
    pub ranking: BTreeMap<ModelId, usize>,
}

/// Per-batch drift verdict. `combined = beta * d_comm + (1-beta) * d_cent`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DriftScore {
    pub batch_index: usize,
    pub d_cent: f64,
    pub d_comm: f64,
    pub combined: f64,
    pub drifted: bool,
}

impl DriftScore {
    /// The first scored batch has no predecessor graph; defined as zero
    /// drift.
    pub fn initial(batch_index: usize) -> Self {
        Self {
            batch_index,
            d_cent: 0.0,
            d_comm: 0.0,
            combined: 0.0,
            drifted: false,
        }
    }

    /// Node sets too disjoint to compare: treated as maximal drift.
    pub fn incomparable(batch_index: usize) -> Self {
        Self {
            batch_index,
            d_cent: 1.0,
            d_comm: 1.0,
            combined: 1.0,
            drifted: true,
        }
    }
}

/// Ranks all nodes by whole-graph PageRank, descending; ties break by
/// ascending model id so ranks are always a permutation of `1..=|V|`.
pub fn centrality_ranking(graph: &ModelGraph, damping: f64, tol: f64) -> Result<CentralityRanking> {
    let pr = pagerank(graph, damping, tol)?;
    let mut order: Vec<(ModelId, f64)> = pr.into_iter().collect();
    order.sort_by(|(ida, va), (idb, vb)| {
        vb.partial_cmp(va)
            .expect("finite pagerank")
            .then(ida.cmp(idb))
    });
    Ok(CentralityRanking {
        batch_index: graph.batch_index,
        ranking: order
            .into_iter()
            .enumerate()
            .map(|(i, (id, _))| (id, i + 1))
            .collect(),
    })
}

fn common_ids<K: Ord + Copy, A, B>(a: &BTreeMap<K, A>, b: &BTreeMap<K, B>) -> Vec<K> {
    a.keys().filter(|k| b.contains_key(k)).copied().collect()
}

/// Centrality drift `(1 - tau) / 2` over the intersection of the two node
/// sets; `None` when fewer than two nodes are shared (incomparable).
pub fn centrality_drift(prev: &CentralityRanking, cur: &CentralityRanking) -> Option<f64> {
    let common = common_ids(&prev.ranking, &cur.ranking);
    if common.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = common.iter().map(|id| prev.ranking[id] as f64).collect();
    let ys: Vec<f64> = common.iter().map(|id| cur.ranking[id] as f64).collect();
    let tau = stats::kendall_tau_b(&xs, &ys)?;
    Some(((1.0 - tau) / 2.0).clamp(0.0, 1.0))
}

/// Community drift `1 - NMI` over the intersection of the node sets;
/// `None` when fewer than two nodes are shared. Two single-community
/// restrictions have NMI 1 (no drift).
pub fn community_drift(prev: &Partition, cur: &Partition) -> Option<f64> {
    let pm = prev.membership();
    let cm = cur.membership();
    let common = common_ids(&pm, &cm);
    if common.len() < 2 {
        return None;
    }
    let a: Vec<usize> = common.iter().map(|id| pm[id]).collect();
    let b: Vec<usize> = common.iter().map(|id| cm[id]).collect();
    Some((1.0 - stats::nmi(&a, &b)).clamp(0.0, 1.0))
}

/// Combines the two signals and applies the strict drift threshold.
pub fn drift_score(
    batch_index: usize,
    d_comm: f64,
    d_cent: f64,
    beta: f64,
    theta_drift: f64,
) -> DriftScore {
    debug_assert!((0.0..=1.0).contains(&d_comm) && (0.0..=1.0).contains(&d_cent));
    let combined = beta * d_comm + (1.0 - beta) * d_cent;
    DriftScore {
        batch_index,
        d_cent,
        d_comm,
        combined,
        drifted: combined > theta_drift,
    }
}
