//! Per-batch model graph: nodes are pool models, edge weights are Spearman
//! correlations of their anomaly-score vectors.

use crate::detectors::ScoreSet;
use crate::stats;
use crate::stream::MIN_BATCH_POINTS;
use crate::{Error, ModelId, Result};

/// Symmetric matrix of pairwise Spearman correlations with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub batch_index: usize,
    pub model_ids: Vec<ModelId>,
    /// Row-major `M x M`, `entries[i][j] == entries[j][i]`, diagonal zero.
    pub entries: Vec<Vec<f64>>,
}

/// Undirected weighted graph over model ids; one stored edge per pair,
/// no self-loops. Negative correlations are kept here; community and
/// centrality computations consume [`positive_view`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub batch_index: usize,
    pub nodes: Vec<ModelId>,
    /// `(i, j, weight)` with `i < j`.
    pub edges: Vec<(ModelId, ModelId, f64)>,
}

impl ModelGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn index_of(&self, id: ModelId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == id)
    }

    /// Adjacency lists over node indices: `adj[i] = [(j, w), ...]`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b, w) in &self.edges {
            let i = self.index_of(a).expect("edge endpoint in nodes");
            let j = self.index_of(b).expect("edge endpoint in nodes");
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        adj
    }

    /// Subgraph induced by `keep` (order preserved from `keep`).
    pub fn induced(&self, keep: &[ModelId]) -> ModelGraph {
        let set: std::collections::BTreeSet<ModelId> = keep.iter().copied().collect();
        ModelGraph {
            batch_index: self.batch_index,
            nodes: keep.to_vec(),
            edges: self
                .edges
                .iter()
                .filter(|(a, b, _)| set.contains(a) && set.contains(b))
                .copied()
                .collect(),
        }
    }

    /// Edge-list text dump, one `i j weight` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(a, b, w) in &self.edges {
            out.push_str(&format!("{a} {b} {w}\n"));
        }
        out
    }
}

/// Pairwise Spearman correlation matrix of a score set. Constant score
/// vectors correlate 0 with everything (the node tends to isolation rather
/// than poisoning the graph with NaNs); the diagonal is zero.
pub fn spearman_corr(score_set: &ScoreSet) -> Result<CorrelationMatrix> {
    let m = score_set.len();
    if m < 2 {
        return Err(Error::TooFewVectors { got: m, min: 2 });
    }
    let len = score_set.vectors[0].scores.len();
    for v in &score_set.vectors {
        if v.scores.len() != len {
            return Err(Error::LengthMismatch(len, v.scores.len()));
        }
    }
    if len < MIN_BATCH_POINTS {
        return Err(Error::ScoresTooShort {
            len,
            min: MIN_BATCH_POINTS,
        });
    }

    // rank once per vector; constant vectors have no defined ranks variance
    let ranks: Vec<Option<Vec<f64>>> = score_set
        .vectors
        .iter()
        .map(|v| {
            let min = v.scores.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = v.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max - min <= 0.0 {
                log::warn!(
                    "model {} produced a constant score vector on batch {}",
                    v.model_id,
                    score_set.batch_index
                );
                None
            } else {
                Some(stats::average_ranks(&v.scores))
            }
        })
        .collect();

    let mut entries = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let w = match (&ranks[i], &ranks[j]) {
                (Some(ri), Some(rj)) => stats::pearson(ri, rj).unwrap_or(0.0),
                _ => 0.0,
            };
            entries[i][j] = w;
            entries[j][i] = w;
        }
    }

    Ok(CorrelationMatrix {
        batch_index: score_set.batch_index,
        model_ids: score_set.model_ids(),
        entries,
    })
}

/// Builds the model graph: one node per model, one edge per nonzero
/// off-diagonal correlation.
pub fn build_graph(corr: &CorrelationMatrix) -> ModelGraph {
    let m = corr.model_ids.len();
    let mut edges = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let w = corr.entries[i][j];
            if w != 0.0 {
                edges.push((corr.model_ids[i], corr.model_ids[j], w));
            }
        }
    }
    ModelGraph {
        batch_index: corr.batch_index,
        nodes: corr.model_ids.clone(),
        edges,
    }
}

/// Clamps weights at zero and drops the resulting zero-weight edges.
/// Modularity and PageRank are only defined for nonnegative weights.
pub fn positive_view(graph: &ModelGraph) -> ModelGraph {
    ModelGraph {
        batch_index: graph.batch_index,
        nodes: graph.nodes.clone(),
        edges: graph
            .edges
            .iter()
            .filter(|(_, _, w)| *w > 0.0)
            .copied()
            .collect(),
    }
}
