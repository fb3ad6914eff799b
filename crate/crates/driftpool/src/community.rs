//! Weighted community detection (Louvain with a resolution parameter) and
//! PageRank centrality by power iteration. Both consume nonnegative-weight
//! graphs; callers pass [`crate::graph::positive_view`].

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::ModelGraph;
use crate::{Error, ModelId, Result};

pub const PAGERANK_MAX_ITERS: usize = 10_000;

/// Disjoint communities covering the graph's node set. Communities are
/// sorted by their smallest member id and members are sorted ascending, so
/// equal partitions compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub batch_index: usize,
    pub communities: Vec<Vec<ModelId>>,
    pub resolution: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.communities.len()
    }

    pub fn community_sizes(&self) -> Vec<usize> {
        self.communities.iter().map(Vec::len).collect()
    }

    /// Community index of each node, keyed by model id.
    pub fn membership(&self) -> BTreeMap<ModelId, usize> {
        let mut m = BTreeMap::new();
        for (c, members) in self.communities.iter().enumerate() {
            for &id in members {
                m.insert(id, c);
            }
        }
        m
    }

    /// Checks disjointness, non-emptiness and coverage of `nodes`.
    pub fn is_valid_for(&self, nodes: &[ModelId]) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        for community in &self.communities {
            if community.is_empty() {
                return false;
            }
            for &id in community {
                if !seen.insert(id) {
                    return false;
                }
            }
        }
        let node_set: std::collections::BTreeSet<ModelId> = nodes.iter().copied().collect();
        seen == node_set
    }

    /// One community holding every node.
    pub fn single(graph: &ModelGraph, resolution: f64) -> Partition {
        let mut members = graph.nodes.clone();
        members.sort_unstable();
        Partition {
            batch_index: graph.batch_index,
            communities: vec![members],
            resolution,
        }
    }

    /// Every node its own community.
    pub fn singletons(graph: &ModelGraph, resolution: f64) -> Partition {
        let mut nodes = graph.nodes.clone();
        nodes.sort_unstable();
        Partition {
            batch_index: graph.batch_index,
            communities: nodes.into_iter().map(|id| vec![id]).collect(),
            resolution,
        }
    }
}

/// Weighted modularity of a partition at the given resolution:
/// `sum_c [ L_c / m - resolution * (k_c / 2m)^2 ]` with `m` the total edge
/// weight, `L_c` the intra-community weight and `k_c` the community degree.
pub fn modularity(graph: &ModelGraph, partition: &Partition, resolution: f64) -> f64 {
    let membership = partition.membership();
    let n_comms = partition.communities.len();
    let mut intra = vec![0.0; n_comms];
    let mut degree = vec![0.0; n_comms];
    let mut m = 0.0;

    for &(a, b, w) in &graph.edges {
        m += w;
        let ca = membership[&a];
        let cb = membership[&b];
        degree[ca] += w;
        degree[cb] += w;
        if ca == cb {
            intra[ca] += w;
        }
    }
    if m <= 0.0 {
        return 0.0;
    }
    (0..n_comms)
        .map(|c| intra[c] / m - resolution * (degree[c] / (2.0 * m)).powi(2))
        .sum()
}

/// Node visitation order for the local-moving phase.
#[derive(Debug, Clone, Copy)]
enum VisitOrder {
    Ascending,
    Shuffled(u64),
}

/// Louvain community detection on a nonnegative-weight graph.
///
/// `shuffle_seed` controls the node visitation order: `None` visits nodes in
/// ascending id order (the default used by the pipeline, fully
/// deterministic), `Some(seed)` applies a seeded shuffle, useful for probing
/// the heuristic's stability. Local moves are repeated until no move gains
/// modularity, then communities are aggregated and the process repeats.
/// An edgeless graph yields all singletons.
pub fn louvain(graph: &ModelGraph, resolution: f64, shuffle_seed: Option<u64>) -> Partition {
    let order = match shuffle_seed {
        None => VisitOrder::Ascending,
        Some(s) => VisitOrder::Shuffled(s),
    };
    let n = graph.node_count();
    if n == 0 {
        return Partition {
            batch_index: graph.batch_index,
            communities: Vec::new(),
            resolution,
        };
    }

    // Working representation: neighbor maps without self-loops plus a
    // separate self-loop weight per node (appears during aggregation).
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut self_loops = vec![0.0; n];
    let mut m = 0.0;
    for &(a, b, w) in &graph.edges {
        debug_assert!(w >= 0.0, "louvain requires nonnegative weights");
        let i = graph.index_of(a).expect("edge endpoint in nodes");
        let j = graph.index_of(b).expect("edge endpoint in nodes");
        *adj[i].entry(j).or_insert(0.0) += w;
        *adj[j].entry(i).or_insert(0.0) += w;
        m += w;
    }

    // Which original nodes each working node represents.
    let mut contains: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    if m <= 0.0 {
        return finish(graph, contains, resolution);
    }

    let mut rng = match order {
        VisitOrder::Ascending => None,
        VisitOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };

    loop {
        let size = adj.len();
        // degree includes self-loops twice
        let degree: Vec<f64> = (0..size)
            .map(|i| adj[i].values().sum::<f64>() + 2.0 * self_loops[i])
            .collect();

        let mut node_to_comm: Vec<usize> = (0..size).collect();
        let mut comm_degree = degree.clone();

        let mut visit: Vec<usize> = (0..size).collect();
        if let Some(rng) = rng.as_mut() {
            visit.shuffle(rng);
        }

        let mut moved_any = false;
        loop {
            let mut moved_this_pass = false;
            for &node in &visit {
                let current = node_to_comm[node];
                let k_i = degree[node];

                // weights from `node` to each neighboring community
                let mut to_comm: BTreeMap<usize, f64> = BTreeMap::new();
                for (&nb, &w) in &adj[node] {
                    *to_comm.entry(node_to_comm[nb]).or_insert(0.0) += w;
                }

                // detach the node while evaluating moves
                comm_degree[current] -= k_i;
                let gain_of = |comm: usize, comm_deg: f64| -> f64 {
                    let w_to = to_comm.get(&comm).copied().unwrap_or(0.0);
                    w_to / m - resolution * k_i * comm_deg / (2.0 * m * m)
                };

                let mut best_comm = current;
                let mut best_gain = gain_of(current, comm_degree[current]);
                for &cand in to_comm.keys() {
                    if cand == current {
                        continue;
                    }
                    let g = gain_of(cand, comm_degree[cand]);
                    if g > best_gain + 1e-12 {
                        best_gain = g;
                        best_comm = cand;
                    }
                }

                comm_degree[best_comm] += k_i;
                if best_comm != current {
                    node_to_comm[node] = best_comm;
                    moved_this_pass = true;
                    moved_any = true;
                }
            }
            if !moved_this_pass {
                break;
            }
        }

        if !moved_any {
            return finish(graph, contains, resolution);
        }

        // aggregate communities into supernodes
        let mut comm_ids: Vec<usize> = node_to_comm.clone();
        comm_ids.sort_unstable();
        comm_ids.dedup();
        let remap: BTreeMap<usize, usize> = comm_ids
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new))
            .collect();
        let n_comms = comm_ids.len();

        let mut new_adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_comms];
        let mut new_loops = vec![0.0; n_comms];
        let mut new_contains: Vec<Vec<usize>> = vec![Vec::new(); n_comms];

        for node in 0..size {
            let c = remap[&node_to_comm[node]];
            new_contains[c].extend(contains[node].iter());
            new_loops[c] += self_loops[node];
            for (&nb, &w) in &adj[node] {
                let cn = remap[&node_to_comm[nb]];
                if cn == c {
                    // each internal edge visited from both endpoints
                    new_loops[c] += w / 2.0;
                } else {
                    *new_adj[c].entry(cn).or_insert(0.0) += w;
                }
            }
        }

        adj = new_adj;
        self_loops = new_loops;
        contains = new_contains;
    }
}

fn finish(graph: &ModelGraph, contains: Vec<Vec<usize>>, resolution: f64) -> Partition {
    let mut communities: Vec<Vec<ModelId>> = contains
        .into_iter()
        .map(|members| {
            let mut ids: Vec<ModelId> = members.into_iter().map(|i| graph.nodes[i]).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    communities.sort_by_key(|c| c[0]);
    Partition {
        batch_index: graph.batch_index,
        communities,
        resolution,
    }
}

/// Weighted PageRank by power iteration with uniform teleport.
///
/// Dangling (isolated) nodes spread their mass uniformly, so such nodes end
/// up holding the teleport share. Values are nonnegative and sum to one;
/// iteration stops when the L1 change drops below `tol`.
pub fn pagerank(graph: &ModelGraph, damping: f64, tol: f64) -> Result<BTreeMap<ModelId, f64>> {
    pagerank_with_max_iters(graph, damping, tol, PAGERANK_MAX_ITERS)
}

pub(crate) fn pagerank_with_max_iters(
    graph: &ModelGraph,
    damping: f64,
    tol: f64,
    max_iters: usize,
) -> Result<BTreeMap<ModelId, f64>> {
    let n = graph.node_count();
    if n == 0 {
        return Ok(BTreeMap::new());
    }
    let adj = graph.adjacency();
    let degree: Vec<f64> = adj
        .iter()
        .map(|nbrs| nbrs.iter().map(|(_, w)| w).sum())
        .collect();

    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    for _ in 0..max_iters {
        let dangling: f64 = (0..n)
            .filter(|&i| degree[i] <= 0.0)
            .map(|i| x[i])
            .sum();
        let mut next = vec![(1.0 - damping) / nf + damping * dangling / nf; n];
        for i in 0..n {
            if degree[i] <= 0.0 {
                continue;
            }
            let share = damping * x[i] / degree[i];
            for &(j, w) in &adj[i] {
                next[j] += share * w;
            }
        }
        let delta: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if delta < tol {
            return Ok(graph
                .nodes
                .iter()
                .copied()
                .zip(x)
                .collect());
        }
    }
    Err(Error::NonConvergence(max_iters))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: u64, edges: &[(u64, u64, f64)]) -> ModelGraph {
        ModelGraph {
            batch_index: 0,
            nodes: (0..n).map(ModelId).collect(),
            edges: edges
                .iter()
                .map(|&(a, b, w)| (ModelId(a), ModelId(b), w))
                .collect(),
        }
    }

    /// Two 5-cliques with strong internal weight and one weak bridge.
    pub fn two_cliques() -> ModelGraph {
        let mut edges = Vec::new();
        for base in [0u64, 5] {
            for i in 0..5 {
                for j in (i + 1)..5 {
                    edges.push((base + i, base + j, 0.9));
                }
            }
        }
        edges.push((0, 5, 0.05));
        graph(10, &edges)
    }

    /// Brute-force best-modularity partition via set-partition enumeration.
    pub fn brute_force_best(graph: &ModelGraph, resolution: f64) -> (Partition, f64) {
        let n = graph.node_count();
        assert!(n <= 10, "enumeration explodes past Bell(10)");
        let mut best: Option<(Partition, f64)> = None;
        // restricted growth strings enumerate set partitions
        let mut assignment = vec![0usize; n];
        loop {
            let n_comms = assignment.iter().max().unwrap() + 1;
            let mut communities = vec![Vec::new(); n_comms];
            for (i, &c) in assignment.iter().enumerate() {
                communities[c].push(graph.nodes[i]);
            }
            let partition = Partition {
                batch_index: 0,
                communities,
                resolution,
            };
            let q = modularity(graph, &partition, resolution);
            if best.as_ref().is_none_or(|(_, bq)| q > *bq) {
                best = Some((partition, q));
            }

            // next restricted growth string
            let mut i = n - 1;
            loop {
                if i == 0 {
                    return best.unwrap();
                }
                let max_prefix = assignment[..i].iter().max().unwrap() + 1;
                if assignment[i] < max_prefix {
                    assignment[i] += 1;
                    for a in assignment[i + 1..].iter_mut() {
                        *a = 0;
                    }
                    break;
                }
                i -= 1;
            }
        }
    }

    #[test]
    fn louvain_recovers_planted_cliques() {
        let g = two_cliques();
        let p = louvain(&g, 1.0, None);
        assert_eq!(p.community_count(), 2);
        let expected: Vec<Vec<ModelId>> = vec![
            (0..5).map(ModelId).collect(),
            (5..10).map(ModelId).collect(),
        ];
        assert_eq!(p.communities, expected);

        // brute force confirms this is the modularity optimum
        let (best, best_q) = brute_force_best(&g, 1.0);
        assert_eq!(best.communities, expected);
        let q = modularity(&g, &p, 1.0);
        assert!((q - best_q).abs() < 1e-9);
    }

    #[test]
    fn edgeless_graph_yields_singletons() {
        let g = graph(4, &[]);
        let p = louvain(&g, 1.0, None);
        assert_eq!(p.community_count(), 4);
        assert!(p.is_valid_for(&g.nodes));
    }

    #[test]
    fn huge_resolution_yields_singletons() {
        let k4 = graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
        assert_eq!(louvain(&k4, 100.0, None).community_count(), 4);
        assert_eq!(louvain(&two_cliques(), 100.0, None).community_count(), 10);
    }

    #[test]
    fn tiny_resolution_merges_connected_graph() {
        // merging the cliques beats keeping them apart once the resolution
        // drops below 2 * (1 - 2 L_c / m) ~ 0.0055 for this bridge weight
        let g = two_cliques();
        assert_eq!(louvain(&g, 0.001, None).community_count(), 1);
        let merged = modularity(&g, &louvain(&g, 0.001, None), 0.001);
        let split = modularity(&g, &louvain(&g, 1.0, None), 0.001);
        assert!(merged > split);
    }

    #[test]
    fn louvain_never_loses_to_singletons() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let n = rng.random_range(2..=10u64);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.5 {
                        edges.push((i, j, rng.random::<f64>()));
                    }
                }
            }
            let g = graph(n, &edges);
            let p = louvain(&g, 1.0, None);
            assert!(p.is_valid_for(&g.nodes));
            let q = modularity(&g, &p, 1.0);
            let q0 = modularity(&g, &Partition::singletons(&g, 1.0), 1.0);
            assert!(q >= q0 - 1e-12, "louvain {q} below singletons {q0}");
        }
    }

    #[test]
    fn pagerank_uniform_on_k4() {
        let k4 = graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
        let pr = pagerank(&k4, 0.85, 1e-12).unwrap();
        for v in pr.values() {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn pagerank_single_node_is_one() {
        let g = graph(1, &[]);
        let pr = pagerank(&g, 0.85, 1e-12).unwrap();
        assert!((pr[&ModelId(0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pagerank_path_matches_closed_form() {
        // a-b-c equal weights: ends hold ((1-d)/3 + d/2) / (1+d), center the rest
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let d = 0.85;
        let pr = pagerank(&g, d, 1e-14).unwrap();
        let end = ((1.0 - d) / 3.0 + d / 2.0) / (1.0 + d);
        let center = 1.0 - 2.0 * end;
        assert!((pr[&ModelId(0)] - end).abs() < 1e-9);
        assert!((pr[&ModelId(2)] - end).abs() < 1e-9);
        assert!((pr[&ModelId(1)] - center).abs() < 1e-9);
        assert!(pr[&ModelId(1)] > pr[&ModelId(0)]);
    }

    #[test]
    fn pagerank_sums_to_one_with_isolated_nodes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        for _ in 0..30 {
            let n = rng.random_range(1..=12u64);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.3 {
                        edges.push((i, j, rng.random::<f64>() + 0.01));
                    }
                }
            }
            let g = graph(n, &edges);
            let pr = pagerank(&g, 0.85, 1e-12).unwrap();
            let sum: f64 = pr.values().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
            assert!(pr.values().all(|&v| v >= 0.0));
        }

        // an isolated node next to a connected pair keeps at least the
        // teleport share
        let g = graph(3, &[(0, 1, 1.0)]);
        let pr = pagerank(&g, 0.85, 1e-12).unwrap();
        assert!(pr[&ModelId(2)] >= (1.0 - 0.85) / 3.0 - 1e-12);
    }

    #[test]
    fn pagerank_can_report_non_convergence() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let err = pagerank_with_max_iters(&g, 0.85, 1e-14, 1).unwrap_err();
        assert!(matches!(err, Error::NonConvergence(1)));
    }

    #[test]
    fn shuffled_visitation_still_recovers_cliques() {
        let g = two_cliques();
        for seed in 0..20 {
            let p = louvain(&g, 1.0, Some(seed));
            assert_eq!(p.community_count(), 2, "seed {seed}");
        }
    }
}
