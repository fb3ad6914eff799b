//! Autoregressive forecast-residual detector with normalized LMS updates.

use std::collections::VecDeque;
use std::hash::Hasher;

use super::{digest_f64s, Detector};
use crate::stream::TimePoint;

const NLMS_EPS: f64 = 1e-8;

/// Per-dimension AR(p) forecaster. The score of a point is the mean
/// absolute one-step forecast error across dimensions; weights adapt by
/// normalized LMS after each point. Lag context persists across batches.
#[derive(Debug, Clone)]
pub struct ArForecast {
    order: usize,
    lr: f64,
    dim: usize,
    weights: Vec<Vec<f64>>,
    lags: Vec<VecDeque<f64>>,
}

impl ArForecast {
    pub fn new(order: usize, lr: f64) -> Self {
        Self {
            order,
            lr,
            dim: 0,
            weights: Vec::new(),
            lags: Vec::new(),
        }
    }
}

impl Detector for ArForecast {
    fn warmup(&self) -> usize {
        self.order + 1
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn fit(&mut self, points: &[TimePoint]) {
        self.dim = points[0].values.len();
        self.weights = vec![vec![0.0; self.order]; self.dim];
        self.lags = vec![VecDeque::with_capacity(self.order); self.dim];
        for p in points {
            self.step(&p.values);
        }
    }

    fn step(&mut self, values: &[f64]) -> f64 {
        let mut total = 0.0;
        for (k, &x) in values.iter().enumerate() {
            let lags = &mut self.lags[k];
            if lags.len() == self.order {
                let w = &mut self.weights[k];
                let pred: f64 = w.iter().zip(lags.iter()).map(|(wi, li)| wi * li).sum();
                let err = x - pred;
                total += err.abs();

                let energy: f64 = NLMS_EPS + lags.iter().map(|l| l * l).sum::<f64>();
                let gain = self.lr * err / energy;
                for (wi, li) in w.iter_mut().zip(lags.iter()) {
                    *wi += gain * li;
                }
                lags.pop_back();
            }
            // most recent lag at the front
            lags.push_front(x);
        }
        total / self.dim as f64
    }

    fn box_clone(&self) -> Box<dyn Detector> {
        Box::new(self.clone())
    }

    fn digest(&self, h: &mut dyn Hasher) {
        for w in &self.weights {
            digest_f64s(h, w);
        }
        for lags in &self.lags {
            digest_f64s(h, lags.iter());
        }
    }
}
