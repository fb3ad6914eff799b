//! Running EWMA z-score detector.

use std::hash::Hasher;

use super::{digest_f64s, Detector};
use crate::stream::TimePoint;

const VAR_FLOOR: f64 = 1e-12;

/// Scores a point by the largest per-dimension |z| against exponentially
/// weighted running moments. Absorption winsorizes the observation at
/// `clamp` standard deviations so single spikes cannot blow up the
/// variance estimate.
#[derive(Debug, Clone)]
pub struct EwmaZScore {
    decay: f64,
    clamp: f64,
    dim: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl EwmaZScore {
    pub fn new(decay: f64, clamp: f64) -> Self {
        Self {
            decay,
            clamp,
            dim: 0,
            mean: Vec::new(),
            var: Vec::new(),
        }
    }
}

impl Detector for EwmaZScore {
    fn warmup(&self) -> usize {
        2
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn fit(&mut self, points: &[TimePoint]) {
        self.dim = points[0].values.len();
        let n = points.len() as f64;
        self.mean = vec![0.0; self.dim];
        self.var = vec![0.0; self.dim];
        for p in points {
            for (k, &v) in p.values.iter().enumerate() {
                self.mean[k] += v / n;
            }
        }
        for p in points {
            for (k, &v) in p.values.iter().enumerate() {
                self.var[k] += (v - self.mean[k]).powi(2) / n;
            }
        }
    }

    fn step(&mut self, values: &[f64]) -> f64 {
        let mut score: f64 = 0.0;
        for (k, &v) in values.iter().enumerate() {
            let sd = self.var[k].max(VAR_FLOOR).sqrt();
            score = score.max((v - self.mean[k]).abs() / sd);

            let clamped = v.clamp(self.mean[k] - self.clamp * sd, self.mean[k] + self.clamp * sd);
            let prev_mean = self.mean[k];
            self.mean[k] += self.decay * (clamped - self.mean[k]);
            self.var[k] =
                (1.0 - self.decay) * self.var[k] + self.decay * (clamped - prev_mean).powi(2);
        }
        score
    }

    fn box_clone(&self) -> Box<dyn Detector> {
        Box::new(self.clone())
    }

    fn digest(&self, h: &mut dyn Hasher) {
        digest_f64s(h, self.mean.iter().chain(&self.var));
    }
}
