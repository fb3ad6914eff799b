//! Random-projection histogram density estimator.

use std::hash::Hasher;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{digest_f64s, Detector};
use crate::stream::TimePoint;

/// Projects each point onto a bank of random directions and scores by the
/// mean negative log of Laplace-smoothed histogram mass. Histogram supports
/// are frozen at fit time (padded past the training range); values landing
/// outside contribute the empty-bin probability, so far-out points score
/// at the ceiling.
#[derive(Debug, Clone)]
pub struct ProjHist {
    n_proj: usize,
    n_bins: usize,
    seed: u64,
    dim: usize,
    projections: Vec<Vec<f64>>,
    lo: Vec<f64>,
    width: Vec<f64>,
    counts: Vec<Vec<u64>>,
    totals: Vec<u64>,
}

impl ProjHist {
    pub fn new(n_proj: usize, n_bins: usize, seed: u64) -> Self {
        Self {
            n_proj,
            n_bins,
            seed,
            dim: 0,
            projections: Vec::new(),
            lo: Vec::new(),
            width: Vec::new(),
            counts: Vec::new(),
            totals: Vec::new(),
        }
    }

    fn bin_of(&self, proj: usize, value: f64) -> Option<usize> {
        let offset = (value - self.lo[proj]) / self.width[proj];
        if offset < 0.0 || offset >= self.n_bins as f64 {
            None
        } else {
            Some(offset as usize)
        }
    }
}

impl Detector for ProjHist {
    fn warmup(&self) -> usize {
        8
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn fit(&mut self, points: &[TimePoint]) {
        self.dim = points[0].values.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, 1.0).expect("valid std");

        // sparse directions for high-dimensional inputs
        let keep = (self.dim as f64).sqrt().ceil() as usize;
        self.projections = (0..self.n_proj)
            .map(|_| {
                let mut w: Vec<f64> = (0..self.dim).map(|_| normal.sample(&mut rng)).collect();
                if self.dim > 4 {
                    let mut idx: Vec<usize> = (0..self.dim).collect();
                    idx.shuffle(&mut rng);
                    for &i in idx.iter().skip(keep) {
                        w[i] = 0.0;
                    }
                }
                w
            })
            .collect();

        self.lo = vec![0.0; self.n_proj];
        self.width = vec![1.0; self.n_proj];
        self.counts = vec![vec![0; self.n_bins]; self.n_proj];
        self.totals = vec![0; self.n_proj];

        for (p, w) in self.projections.iter().enumerate() {
            let projected: Vec<f64> = points
                .iter()
                .map(|pt| w.iter().zip(&pt.values).map(|(a, b)| a * b).sum())
                .collect();
            let min = projected.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = projected.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = ((max - min) * 0.05).max(1e-9);
            self.lo[p] = min - pad;
            self.width[p] = ((max - min) + 2.0 * pad) / self.n_bins as f64;
        }
        for pt in points {
            self.step(&pt.values);
        }
        // drop the scores produced while filling the histograms
    }

    fn step(&mut self, values: &[f64]) -> f64 {
        let mut score = 0.0;
        for p in 0..self.n_proj {
            let projected: f64 = self.projections[p]
                .iter()
                .zip(values)
                .map(|(a, b)| a * b)
                .sum();
            let bin = self.bin_of(p, projected);
            let count = bin.map_or(0, |b| self.counts[p][b]);
            let prob =
                (count as f64 + 1.0) / (self.totals[p] as f64 + self.n_bins as f64);
            score -= prob.ln();

            if let Some(b) = bin {
                self.counts[p][b] += 1;
            }
            self.totals[p] += 1;
        }
        score / self.n_proj as f64
    }

    fn box_clone(&self) -> Box<dyn Detector> {
        Box::new(self.clone())
    }

    fn digest(&self, h: &mut dyn Hasher) {
        for w in &self.projections {
            digest_f64s(h, w);
        }
        for counts in &self.counts {
            for &c in counts {
                h.write_u64(c);
            }
        }
        for &t in &self.totals {
            h.write_u64(t);
        }
    }
}
