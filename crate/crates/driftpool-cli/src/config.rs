//! Flat `key = value` config files with `[section]` headers. The
//! `[pipeline]` section addresses every pipeline field; `[detectors]` holds
//! one architecture spec per line (`family key=value ...`) and replaces the
//! built-in set when present.

use std::path::Path;

use anyhow::{bail, Context, Result};
use driftpool::detectors::ArchitectureSpec;
use driftpool::pipeline::{Mode, PipelineConfig, ThresholdPolicy};

#[derive(Debug, Default)]
pub struct FileConfig {
    pub pipeline: PipelineOverrides,
    pub detectors: Option<Vec<ArchitectureSpec>>,
}

/// Pipeline fields as optional overrides, so CLI flags and file values
/// compose (flags win).
#[derive(Debug, Default)]
pub struct PipelineOverrides {
    pub batch_size: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub theta_drift: Option<f64>,
    pub resolution: Option<f64>,
    pub capacity: Option<usize>,
    pub damping: Option<f64>,
    pub pagerank_tol: Option<f64>,
    pub threshold_policy: Option<String>,
    pub threshold_k: Option<f64>,
    pub threshold_q: Option<f64>,
    pub threshold_window: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub standardize: Option<bool>,
}

impl PipelineOverrides {
    /// Applies the overrides on top of `base`.
    pub fn apply(&self, base: &PipelineConfig) -> Result<PipelineConfig> {
        let mut cfg = base.clone();
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.theta_drift {
            cfg.theta_drift = v;
        }
        if let Some(v) = self.resolution {
            cfg.resolution = v;
        }
        if let Some(v) = self.capacity {
            cfg.capacity = Some(v);
        }
        if let Some(v) = self.damping {
            cfg.damping = v;
        }
        if let Some(v) = self.pagerank_tol {
            cfg.pagerank_tol = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(mode) = &self.mode {
            cfg.mode = Mode::parse(mode)?;
        }
        if let Some(v) = self.standardize {
            cfg.standardize = v;
        }

        let default_window = 2048;
        match self.threshold_policy.as_deref() {
            None => {
                if let (ThresholdPolicy::RollingZScore { k, window }, Some(nk)) =
                    (cfg.threshold, self.threshold_k)
                {
                    let _ = k;
                    cfg.threshold = ThresholdPolicy::RollingZScore {
                        k: nk,
                        window: self.threshold_window.unwrap_or(window),
                    };
                } else if let Some(w) = self.threshold_window {
                    cfg.threshold = match cfg.threshold {
                        ThresholdPolicy::RollingZScore { k, .. } => {
                            ThresholdPolicy::RollingZScore { k, window: w }
                        }
                        ThresholdPolicy::Quantile { q, .. } => {
                            ThresholdPolicy::Quantile { q, window: w }
                        }
                    };
                }
            }
            Some("rolling_zscore") => {
                cfg.threshold = ThresholdPolicy::RollingZScore {
                    k: self.threshold_k.unwrap_or(3.0),
                    window: self.threshold_window.unwrap_or(default_window),
                };
            }
            Some("quantile") => {
                cfg.threshold = ThresholdPolicy::Quantile {
                    q: self.threshold_q.unwrap_or(0.99),
                    window: self.threshold_window.unwrap_or(default_window),
                };
            }
            Some(other) => bail!("unknown threshold policy `{other}`"),
        }
        Ok(cfg)
    }
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn parse(text: &str) -> Result<FileConfig> {
    let mut cfg = FileConfig::default();
    let mut section = String::from("pipeline");
    let mut detector_lines: Vec<ArchitectureSpec> = Vec::new();
    let mut saw_detectors = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            if section == "detectors" {
                saw_detectors = true;
            }
            continue;
        }
        match section.as_str() {
            "pipeline" => {
                let (key, value) = line
                    .split_once('=')
                    .with_context(|| format!("line {}: expected key = value", lineno + 1))?;
                let (key, value) = (key.trim(), value.trim());
                let p = &mut cfg.pipeline;
                let ctx = || format!("line {}: bad value `{value}` for `{key}`", lineno + 1);
                match key {
                    "batch_size" => p.batch_size = Some(value.parse().with_context(ctx)?),
                    "alpha" => p.alpha = Some(value.parse().with_context(ctx)?),
                    "beta" => p.beta = Some(value.parse().with_context(ctx)?),
                    "gamma" => p.gamma = Some(value.parse().with_context(ctx)?),
                    "theta_drift" => p.theta_drift = Some(value.parse().with_context(ctx)?),
                    "resolution" => p.resolution = Some(value.parse().with_context(ctx)?),
                    "capacity" => p.capacity = Some(value.parse().with_context(ctx)?),
                    "damping" => p.damping = Some(value.parse().with_context(ctx)?),
                    "pagerank_tol" => p.pagerank_tol = Some(value.parse().with_context(ctx)?),
                    "threshold_policy" => p.threshold_policy = Some(value.to_string()),
                    "threshold_k" => p.threshold_k = Some(value.parse().with_context(ctx)?),
                    "threshold_q" => p.threshold_q = Some(value.parse().with_context(ctx)?),
                    "threshold_window" => {
                        p.threshold_window = Some(value.parse().with_context(ctx)?)
                    }
                    "seed" => p.seed = Some(value.parse().with_context(ctx)?),
                    "mode" => p.mode = Some(value.to_string()),
                    "standardize" => p.standardize = Some(value.parse().with_context(ctx)?),
                    other => bail!("line {}: unknown pipeline key `{other}`", lineno + 1),
                }
            }
            "detectors" => {
                let spec = ArchitectureSpec::parse_line(line)
                    .with_context(|| format!("line {}: bad detector spec", lineno + 1))?;
                detector_lines.push(spec);
            }
            other => bail!("unknown section `[{other}]`"),
        }
    }

    if saw_detectors {
        if detector_lines.len() < 2 {
            bail!("[detectors] section needs at least 2 specs");
        }
        cfg.detectors = Some(detector_lines);
    }
    Ok(cfg)
}
