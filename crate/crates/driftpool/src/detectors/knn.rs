//! k-nearest-neighbor distance over a bounded reservoir of past windows.

use std::collections::VecDeque;
use std::hash::Hasher;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{digest_f64s, Detector};
use crate::stream::TimePoint;

/// Embeds the last `window` points and scores by the mean Euclidean
/// distance to the `k` nearest of up to `reservoir` stored past windows.
/// The reservoir is maintained by seeded uniform reservoir sampling, so
/// memory stays bounded on unbounded streams.
#[derive(Debug, Clone)]
pub struct WindowKnn {
    window: usize,
    k: usize,
    cap: usize,
    dim: usize,
    rng: ChaCha8Rng,
    ring: VecDeque<Vec<f64>>,
    reservoir: Vec<Vec<f64>>,
    seen: u64,
}

impl WindowKnn {
    pub fn new(window: usize, k: usize, cap: usize, seed: u64) -> Self {
        Self {
            window,
            k,
            cap,
            dim: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ring: VecDeque::new(),
            reservoir: Vec::new(),
            seen: 0,
        }
    }

    fn embed(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.window * self.dim);
        for p in &self.ring {
            v.extend_from_slice(p);
        }
        v
    }

    fn knn_distance(&self, v: &[f64]) -> f64 {
        let mut dists: Vec<f64> = self
            .reservoir
            .iter()
            .map(|r| {
                r.iter()
                    .zip(v)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let k = self.k.min(dists.len());
        dists.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite distance"));
        dists[..k].iter().sum::<f64>() / k as f64
    }

    fn absorb(&mut self, v: Vec<f64>) {
        self.seen += 1;
        if self.reservoir.len() < self.cap {
            self.reservoir.push(v);
        } else {
            let j = self.rng.random_range(0..self.seen) as usize;
            if j < self.cap {
                self.reservoir[j] = v;
            }
        }
    }
}

impl Detector for WindowKnn {
    fn warmup(&self) -> usize {
        self.window + self.k
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn fit(&mut self, points: &[TimePoint]) {
        self.dim = points[0].values.len();
        self.ring = VecDeque::with_capacity(self.window);
        self.reservoir = Vec::new();
        self.seen = 0;
        for p in points {
            self.step(&p.values);
        }
    }

    fn step(&mut self, values: &[f64]) -> f64 {
        if self.ring.len() == self.window {
            self.ring.pop_front();
        }
        self.ring.push_back(values.to_vec());
        if self.ring.len() < self.window {
            return 0.0;
        }
        let v = self.embed();
        let score = if self.reservoir.len() >= self.k {
            self.knn_distance(&v)
        } else {
            0.0
        };
        self.absorb(v);
        score
    }

    fn box_clone(&self) -> Box<dyn Detector> {
        Box::new(self.clone())
    }

    fn digest(&self, h: &mut dyn Hasher) {
        h.write_u64(self.seen);
        for r in &self.reservoir {
            digest_f64s(h, r);
        }
        for p in &self.ring {
            digest_f64s(h, p);
        }
    }
}
