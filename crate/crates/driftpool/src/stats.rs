//! Rank statistics shared by the graph, ensemble and drift stages: average
//! ranks, Spearman and Kendall correlations, ROC-AUC and normalized mutual
//! information.
//!
//! All routines use average ranks for ties and natural logarithms for
//! entropies. They are deliberately implemented with different algorithms
//! than the brute-force oracles used in the test suite (fast ranking +
//! one-pass Pearson vs. pairwise counting, merge-sort inversions vs.
//! all-pairs concordance).

/// Average (fractional) ranks of `xs`, 1-based. Tied values share the mean
/// of the ranks they occupy.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("non-finite value in ranking"));

    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 averaged over the tied run
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation, one-pass moment form. Returns `None` when either
/// side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some(((n * sxy - sx * sy) / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average-rank tie handling. Returns `None`
/// when either input is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Kendall's tau-b via merge-sort inversion counting (Knight's algorithm)
/// with tie corrections. Returns `None` when either side is entirely tied.
pub fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    debug_assert_eq!(n, ys.len());
    if n < 2 {
        return None;
    }

    // Sort lexicographically by (x, y).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        xs[a]
            .partial_cmp(&xs[b])
            .expect("non-finite value")
            .then(ys[a].partial_cmp(&ys[b]).expect("non-finite value"))
    });

    let n_pairs = n as f64 * (n as f64 - 1.0) / 2.0;

    // Ties in x, joint ties in (x, y).
    let mut ties_x = 0.0;
    let mut ties_xy = 0.0;
    {
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
                j += 1;
            }
            let run = (j - i + 1) as f64;
            ties_x += run * (run - 1.0) / 2.0;

            let mut k = i;
            while k <= j {
                let mut l = k;
                while l < j && ys[order[l + 1]] == ys[order[k]] {
                    l += 1;
                }
                let jr = (l - k + 1) as f64;
                ties_xy += jr * (jr - 1.0) / 2.0;
                k = l + 1;
            }
            i = j + 1;
        }
    }

    // Ties in y.
    let mut ties_y = 0.0;
    {
        let mut ys_sorted: Vec<f64> = ys.to_vec();
        ys_sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value"));
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && ys_sorted[j + 1] == ys_sorted[i] {
                j += 1;
            }
            let run = (j - i + 1) as f64;
            ties_y += run * (run - 1.0) / 2.0;
            i = j + 1;
        }
    }

    // Discordant pairs = inversions of the y-sequence taken in (x, y) order.
    // Pairs tied in x were placed in ascending-y order by the lexicographic
    // sort and therefore contribute no inversions.
    let mut seq: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let disc = merge_sort_inversions(&mut seq) as f64;
    let conc_minus_disc = n_pairs - ties_x - ties_y + ties_xy - 2.0 * disc;

    let denom = ((n_pairs - ties_x) * (n_pairs - ties_y)).sqrt();
    if denom <= 0.0 {
        return None;
    }
    Some((conc_minus_disc / denom).clamp(-1.0, 1.0))
}

/// Counts inversions while merge-sorting `xs` in place. Equal elements are
/// not counted as inversions.
fn merge_sort_inversions(xs: &mut [f64]) -> u64 {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (lo, hi) = xs.split_at_mut(mid);
        merge_sort_inversions(lo) + merge_sort_inversions(hi)
    };
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if xs[j] < xs[i] {
            // xs[j] jumps ahead of the remaining left elements
            inv += (mid - i) as u64;
            merged.push(xs[j]);
            j += 1;
        } else {
            merged.push(xs[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&xs[i..mid]);
    merged.extend_from_slice(&xs[j..n]);
    xs.copy_from_slice(&merged);
    inv
}

/// ROC-AUC of `scores` against binary `labels`, ties counted half. Returns
/// `None` when only one class is present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = average_ranks(scores);
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&r, _)| r)
        .sum();
    let u = rank_sum_pos - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Normalized mutual information between two labelings of the same items,
/// normalized by the arithmetic mean of the entropies.
///
/// Conventions: if both labelings have zero entropy (each a single cluster)
/// the partitions are identical and NMI is 1; if exactly one side has zero
/// entropy, MI is 0 and NMI is 0.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::BTreeMap;
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let nf = n as f64;

    // ordered maps keep the float summation order deterministic
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut ca: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        *ca.entry(x).or_insert(0.0) += 1.0;
        *cb.entry(y).or_insert(0.0) += 1.0;
    }

    let h = |counts: &BTreeMap<usize, f64>| -> f64 {
        counts
            .values()
            .map(|&c| {
                let p = c / nf;
                -p * p.ln()
            })
            .sum()
    };
    let ha = h(&ca);
    let hb = h(&cb);
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }

    // summing the terms in sorted value order makes NMI(a,b) and NMI(b,a)
    // bit-identical: swapping the arguments permutes the contingency cells
    // but not the multiset of term values
    let mut terms: Vec<f64> = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c / nf;
            let px = ca[&x] / nf;
            let py = cb[&y] / nf;
            pxy * (pxy / (px * py)).ln()
        })
        .collect();
    terms.sort_by(|a, b| a.partial_cmp(b).expect("finite MI term"));
    let mi: f64 = terms.iter().sum();
    (mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0)
}

/// Per-batch z-normalization; a constant slice maps to all zeros.
pub fn z_normalize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Vec::new();
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / sd).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // ---- independent oracles -------------------------------------------

    /// O(n^2) ranks: 1 + #smaller + (#equal - 1)/2.
    pub fn ranks_oracle(xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let smaller = xs.iter().filter(|&&y| y < x).count() as f64;
                let equal = xs.iter().filter(|&&y| y == x).count() as f64;
                1.0 + smaller + (equal - 1.0) / 2.0
            })
            .collect()
    }

    /// Two-pass textbook Pearson on oracle ranks.
    pub fn spearman_oracle(xs: &[f64], ys: &[f64]) -> Option<f64> {
        let rx = ranks_oracle(xs);
        let ry = ranks_oracle(ys);
        let n = rx.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for (&x, &y) in rx.iter().zip(&ry) {
            num += (x - mx) * (y - my);
            dx += (x - mx) * (x - mx);
            dy += (y - my) * (y - my);
        }
        if dx == 0.0 || dy == 0.0 {
            None
        } else {
            Some(num / (dx.sqrt() * dy.sqrt()))
        }
    }

    /// All-pairs concordance count for tau-b.
    pub fn kendall_oracle(xs: &[f64], ys: &[f64]) -> Option<f64> {
        let n = xs.len();
        let (mut conc, mut disc, mut tx, mut ty) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = xs[i] - xs[j];
                let dy = ys[i] - ys[j];
                if dx == 0.0 && dy == 0.0 {
                    // joint tie: counted in neither correction
                } else if dx == 0.0 {
                    tx += 1.0;
                } else if dy == 0.0 {
                    ty += 1.0;
                } else if dx * dy > 0.0 {
                    conc += 1.0;
                } else {
                    disc += 1.0;
                }
            }
        }
        let denom = ((conc + disc + tx) * (conc + disc + ty)).sqrt();
        if denom == 0.0 {
            None
        } else {
            Some((conc - disc) / denom)
        }
    }

    /// Mann-Whitney pair counting with half credit for ties.
    pub fn auc_oracle(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let pos: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| !l)
            .map(|(&s, _)| s)
            .collect();
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for &p in &pos {
            for &q in &neg {
                total += if p > q {
                    1.0
                } else if p == q {
                    0.5
                } else {
                    0.0
                };
            }
        }
        Some(total / (pos.len() as f64 * neg.len() as f64))
    }

    /// Contingency-table MI with explicit double loop over cluster labels.
    pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len() as f64;
        let la: Vec<usize> = {
            let mut v = a.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        let lb: Vec<usize> = {
            let mut v = b.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut mi = 0.0;
        for &x in &la {
            for &y in &lb {
                let nxy = a
                    .iter()
                    .zip(b)
                    .filter(|(&p, &q)| p == x && q == y)
                    .count() as f64;
                if nxy == 0.0 {
                    continue;
                }
                let nx = a.iter().filter(|&&p| p == x).count() as f64;
                let ny = b.iter().filter(|&&q| q == y).count() as f64;
                mi += (nxy / n) * ((nxy * n) / (nx * ny)).ln();
            }
        }
        let ent = |labels: &[usize], uniq: &[usize]| -> f64 {
            uniq.iter()
                .map(|&x| {
                    let c = labels.iter().filter(|&&p| p == x).count() as f64;
                    let p = c / n;
                    -p * p.ln()
                })
                .sum()
        };
        let ha = ent(a, &la);
        let hb = ent(b, &lb);
        if ha == 0.0 && hb == 0.0 {
            return 1.0;
        }
        if ha + hb == 0.0 {
            return 0.0;
        }
        mi / ((ha + hb) / 2.0)
    }

    // ---- frozen examples -----------------------------------------------

    #[test]
    fn spearman_identical_ranking_is_one() {
        let s = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_reversed_ranking_is_minus_one() {
        let s = spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_one_swap_is_half() {
        // ranks (1,2,3) vs (1,3,2): Pearson on the rank vectors = 0.5
        let s = spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_constant_is_none() {
        assert!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).is_none());
    }

    #[test]
    fn kendall_examples() {
        assert!((kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // one swapped pair out of three
        let t = kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn auc_examples() {
        let l = |v: &[u8]| v.iter().map(|&x| x == 1).collect::<Vec<bool>>();
        assert_eq!(roc_auc(&[1.0, 2.0, 3.0, 4.0], &l(&[0, 0, 1, 1])), Some(1.0));
        assert_eq!(roc_auc(&[4.0, 3.0, 2.0, 1.0], &l(&[0, 0, 1, 1])), Some(0.0));
        // 3 of 4 positive-negative pairs correctly ordered
        assert_eq!(roc_auc(&[1.0, 2.0, 3.0, 4.0], &l(&[0, 1, 0, 1])), Some(0.75));
        assert_eq!(roc_auc(&[1.0, 2.0], &l(&[1, 1])), None);
    }

    #[test]
    fn nmi_examples() {
        // identical partitions
        assert!((nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]) - 1.0).abs() < 1e-12);
        // identical up to relabeling
        assert!((nmi(&[0, 0, 1, 1], &[7, 7, 3, 3]) - 1.0).abs() < 1e-12);
        // {1,2}{3,4} vs {1,3}{2,4}: zero mutual information
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).abs() < 1e-12);
        // both single-community: defined as 1
        assert!((nmi(&[0, 0, 0], &[4, 4, 4]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn z_normalize_constant_maps_to_zeros() {
        assert_eq!(z_normalize(&[2.0, 2.0, 2.0]), vec![0.0, 0.0, 0.0]);
        let z = z_normalize(&[1.0, 2.0, 3.0]);
        assert!(z.iter().sum::<f64>().abs() < 1e-12);
    }

    // ---- oracle agreement ----------------------------------------------

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, with_ties: bool) -> Vec<f64> {
        (0..n)
            .map(|_| {
                if with_ties {
                    // coarse grid forces ties
                    (rng.random_range(0..8) as f64) / 2.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect()
    }

    #[test]
    fn spearman_matches_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for case in 0..200 {
            let n = rng.random_range(3..=30);
            let xs = random_vec(&mut rng, n, case % 2 == 0);
            let ys = random_vec(&mut rng, n, case % 3 == 0);
            match (spearman(&xs, &ys), spearman_oracle(&xs, &ys)) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "case {case}: {a} vs {b}"),
                (None, None) => {}
                (a, b) => panic!("case {case}: disagree {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn kendall_matches_oracle_exhaustive_and_random() {
        // exhaustive over all permutations of sizes 2..=6 against identity
        fn permutations(n: usize) -> Vec<Vec<f64>> {
            fn go(cur: &mut Vec<f64>, rest: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
                if rest.is_empty() {
                    out.push(cur.clone());
                    return;
                }
                for i in 0..rest.len() {
                    let v = rest.remove(i);
                    cur.push(v);
                    go(cur, rest, out);
                    cur.pop();
                    rest.insert(i, v);
                }
            }
            let mut out = Vec::new();
            go(&mut Vec::new(), &mut (1..=n).map(|i| i as f64).collect(), &mut out);
            out
        }
        for n in 2..=6 {
            let idx: Vec<f64> = (1..=n).map(|i| i as f64).collect();
            for perm in permutations(n) {
                let a = kendall_tau_b(&idx, &perm).unwrap();
                let b = kendall_oracle(&idx, &perm).unwrap();
                assert!((a - b).abs() < 1e-12, "n={n} perm={perm:?}");
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..200 {
            let n = rng.random_range(2..=60);
            let xs = random_vec(&mut rng, n, true);
            let ys = random_vec(&mut rng, n, case % 2 == 0);
            match (kendall_tau_b(&xs, &ys), kendall_oracle(&xs, &ys)) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "case {case}: {a} vs {b}"),
                (None, None) => {}
                (a, b) => panic!("case {case}: disagree {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn auc_matches_pair_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for case in 0..200 {
            let n = rng.random_range(2..=50);
            let scores = random_vec(&mut rng, n, case % 2 == 0);
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
            assert_eq!(
                roc_auc(&scores, &labels).is_some(),
                auc_oracle(&scores, &labels).is_some()
            );
            if let (Some(a), Some(b)) = (roc_auc(&scores, &labels), auc_oracle(&scores, &labels)) {
                assert!((a - b).abs() < 1e-9, "case {case}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn nmi_matches_contingency_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for case in 0..200 {
            let n = rng.random_range(2..=40);
            let k = rng.random_range(1..=5);
            let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let x = nmi(&a, &b);
            let y = nmi_oracle(&a, &b).clamp(0.0, 1.0);
            assert!((x - y).abs() < 1e-9, "case {case}: {x} vs {y}");
        }
    }

    #[test]
    fn nmi_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..100 {
            let n = rng.random_range(2..=30);
            let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            // bit-exact symmetry
            assert_eq!(nmi(&a, &b).to_bits(), nmi(&b, &a).to_bits());
        }
    }

    #[test]
    fn spearman_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for _ in 0..100 {
            let n = rng.random_range(3..=40);
            let xs = random_vec(&mut rng, n, false);
            let ys = random_vec(&mut rng, n, true);
            let f = |v: f64| (v * 3.0 + 1.0).exp(); // strictly increasing
            let ys_t: Vec<f64> = ys.iter().map(|&v| f(v)).collect();
            let a = spearman(&xs, &ys);
            let b = spearman(&xs, &ys_t);
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                _ => panic!("degeneracy changed under monotone transform"),
            }
        }
    }
}
