//! Incremental PCA (CCIPCA) over delay-embedded windows, scored by
//! reconstruction error.

use std::collections::VecDeque;
use std::hash::Hasher;

use super::{digest_f64s, Detector};
use crate::stream::TimePoint;

const AMNESIA: f64 = 2.0;
const NORM_EPS: f64 = 1e-12;

/// Embeds the last `window` points into one vector, tracks its running mean
/// and the top `k` principal directions with candid covariance-free
/// incremental PCA, and scores each point by the Euclidean norm of the
/// residual left after removing those directions.
#[derive(Debug, Clone)]
pub struct IncPca {
    window: usize,
    k: usize,
    dim: usize,
    embed_dim: usize,
    n: u64,
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    ring: VecDeque<Vec<f64>>,
}

impl IncPca {
    pub fn new(window: usize, k: usize) -> Self {
        Self {
            window,
            k,
            dim: 0,
            embed_dim: 0,
            n: 0,
            mean: Vec::new(),
            components: Vec::new(),
            ring: VecDeque::new(),
        }
    }

    fn embed(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.embed_dim);
        for point in &self.ring {
            v.extend_from_slice(point);
        }
        v
    }

    fn residual_norm(&self, v: &[f64]) -> f64 {
        let mut u: Vec<f64> = v.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        for comp in &self.components {
            let norm2: f64 = comp.iter().map(|c| c * c).sum();
            if norm2 <= NORM_EPS {
                continue;
            }
            let norm = norm2.sqrt();
            let proj: f64 = u.iter().zip(comp).map(|(a, b)| a * b).sum::<f64>() / norm;
            for (ui, ci) in u.iter_mut().zip(comp) {
                *ui -= proj * ci / norm;
            }
        }
        u.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn absorb(&mut self, v: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        let keep = ((n - 1.0 - AMNESIA) / n).max(0.0);
        let learn = 1.0 - keep;
        for (m, &x) in self.mean.iter_mut().zip(v) {
            *m = keep * *m + learn * x;
        }

        let mut u: Vec<f64> = v.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        for i in 0..self.k {
            if self.n <= i as u64 + 1 {
                // initialize direction i from the current residual
                self.components[i].copy_from_slice(&u);
                continue;
            }
            let comp = &mut self.components[i];
            let norm2: f64 = comp.iter().map(|c| c * c).sum();
            if norm2 <= NORM_EPS {
                comp.copy_from_slice(&u);
                continue;
            }
            let norm = norm2.sqrt();
            let coeff: f64 = u.iter().zip(comp.iter()).map(|(a, b)| a * b).sum::<f64>() / norm;
            for (ci, &ui) in comp.iter_mut().zip(&u) {
                *ci = keep * *ci + learn * ui * coeff;
            }
            // deflate for the next direction
            let norm2: f64 = comp.iter().map(|c| c * c).sum();
            if norm2 > NORM_EPS {
                let norm = norm2.sqrt();
                let proj: f64 = u.iter().zip(comp.iter()).map(|(a, b)| a * b).sum::<f64>() / norm;
                for (ui, ci) in u.iter_mut().zip(comp.iter()) {
                    *ui -= proj * ci / norm;
                }
            }
        }
    }
}

impl Detector for IncPca {
    fn warmup(&self) -> usize {
        self.window + self.k + 2
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn fit(&mut self, points: &[TimePoint]) {
        self.dim = points[0].values.len();
        self.embed_dim = self.window * self.dim;
        self.n = 0;
        self.mean = vec![0.0; self.embed_dim];
        self.components = vec![vec![0.0; self.embed_dim]; self.k];
        self.ring = VecDeque::with_capacity(self.window);
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
        let score = if self.n > self.k as u64 {
            self.residual_norm(&v)
        } else {
            0.0
        };
        self.absorb(&v);
        score
    }

    fn box_clone(&self) -> Box<dyn Detector> {
        Box::new(self.clone())
    }

    fn digest(&self, h: &mut dyn Hasher) {
        h.write_u64(self.n);
        digest_f64s(h, &self.mean);
        for c in &self.components {
            digest_f64s(h, c);
        }
        for p in &self.ring {
            digest_f64s(h, p);
        }
    }
}
