//! Stream ingestion and batching: labeled multivariate series from CSV,
//! fixed-size batch partitioning, seeded synthetic generators and the
//! online per-dimension standardizer applied ahead of the detectors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Rank statistics on fewer points are meaningless; a trailing partial batch
/// shorter than this is dropped, and a whole stream shorter than this is
/// rejected.
pub const MIN_BATCH_POINTS: usize = 10;

/// One observation of the stream: a `d`-dimensional value vector plus an
/// optional evaluation-only anomaly label.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimePoint {
    /// Global time step of this point within the stream.
    pub index: usize,
    pub values: Vec<f64>,
    /// `Some(true)` marks an anomaly. Labels never reach the detectors.
    pub label: Option<bool>,
}

/// A contiguous slice of the stream, the unit of processing.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub batch_index: usize,
    pub points: Vec<TimePoint>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.points.first().map_or(0, |p| p.values.len())
    }

    /// Labels of the batch, `None` for unlabeled points.
    pub fn labels(&self) -> Vec<Option<bool>> {
        self.points.iter().map(|p| p.label).collect()
    }
}

/// An in-memory labeled multivariate series. Immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub dimension: usize,
    pub points: Vec<TimePoint>,
    pub name: String,
}

impl LabeledStream {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        self.points.first().is_some_and(|p| p.label.is_some())
    }
}

/// Column mapping for CSV ingestion. With `value_columns` empty, every
/// numeric column except the label column is treated as a value column.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    pub value_columns: Vec<String>,
    /// Label column name; defaults to a column literally named `label`
    /// when present.
    pub label_column: Option<String>,
}

/// Loads a labeled stream from a CSV file with a header row.
pub fn load_stream(path: &Path, schema: &CsvSchema) -> Result<LabeledStream> {
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "stream".to_string());
    load_stream_from_reader(file, schema, name)
}

/// Same as [`load_stream`] but from any reader; `name` labels the stream.
pub fn load_stream_from_reader<R: std::io::Read>(
    reader: R,
    schema: &CsvSchema,
    name: String,
) -> Result<LabeledStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::EmptyStream("no header row".into()));
    }

    let label_name = schema
        .label_column
        .clone()
        .or_else(|| headers.iter().find(|h| h.as_str() == "label").cloned());
    let label_idx = match &label_name {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Csv(format!("label column `{name}` not in header")))?,
        ),
        None => None,
    };

    let mut records = rdr.records();
    let first = match records.next() {
        Some(rec) => rec.map_err(|e| Error::Csv(e.to_string()))?,
        None => return Err(Error::EmptyStream("no data rows".into())),
    };

    // Resolve value columns: explicit schema, or every numeric column of the
    // first data row except the label column.
    let value_idx: Vec<usize> = if schema.value_columns.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .filter(|(i, _)| first.get(*i).is_some_and(|c| c.trim().parse::<f64>().is_ok()))
            .map(|(i, _)| i)
            .collect()
    } else {
        schema
            .value_columns
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Csv(format!("value column `{name}` not in header")))
            })
            .collect::<Result<Vec<_>>>()?
    };
    if value_idx.is_empty() {
        return Err(Error::Csv("no numeric value columns detected".into()));
    }

    let dimension = value_idx.len();
    let mut points = Vec::new();
    let parse_row = |row: usize, rec: &csv::StringRecord| -> Result<TimePoint> {
        if rec.len() != headers.len() {
            return Err(Error::BadRow {
                row,
                msg: format!("expected {} cells, got {}", headers.len(), rec.len()),
            });
        }
        let mut values = Vec::with_capacity(dimension);
        for &i in &value_idx {
            let cell = rec.get(i).unwrap().trim();
            let v: f64 = cell.parse().map_err(|_| Error::BadRow {
                row,
                msg: format!("non-numeric value `{cell}` in column `{}`", headers[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::BadRow {
                    row,
                    msg: format!("non-finite value in column `{}`", headers[i]),
                });
            }
            values.push(v);
        }
        let label = match label_idx {
            Some(i) => {
                let cell = rec.get(i).unwrap().trim();
                match cell {
                    "0" => Some(false),
                    "1" => Some(true),
                    other => {
                        return Err(Error::BadRow {
                            row,
                            msg: format!("label `{other}` not in {{0,1}}"),
                        })
                    }
                }
            }
            None => None,
        };
        Ok(TimePoint {
            index: row,
            values,
            label,
        })
    };

    points.push(parse_row(0, &first)?);
    for (row, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        points.push(parse_row(row + 1, &rec)?);
    }

    Ok(LabeledStream {
        dimension,
        points,
        name,
    })
}

/// Writes a stream back to CSV (`v0..v{d-1}` plus `label` when present).
/// Values are printed with Rust's shortest round-trip float formatting, so
/// reloading reproduces them bit-exactly.
pub fn write_stream_csv<W: Write>(stream: &LabeledStream, w: &mut W) -> Result<()> {
    let labeled = stream.has_labels();
    let mut header: Vec<String> = (0..stream.dimension).map(|i| format!("v{i}")).collect();
    if labeled {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for p in &stream.points {
        let mut cells: Vec<String> = p.values.iter().map(|v| format!("{v}")).collect();
        if labeled {
            cells.push(if p.label == Some(true) { "1" } else { "0" }.into());
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Partitions a stream into fixed-size batches. The final partial batch is
/// kept if it has at least [`MIN_BATCH_POINTS`] points and dropped
/// otherwise; a stream that yields no batch at all is an error.
pub fn batch_iter(stream: &LabeledStream, batch_size: usize) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::BatchSizeTooSmall(batch_size));
    }
    let mut batches = Vec::new();
    for (batch_index, chunk) in stream.points.chunks(batch_size).enumerate() {
        if chunk.len() < batch_size && chunk.len() < MIN_BATCH_POINTS {
            break; // tail too short for rank statistics
        }
        batches.push(Batch {
            batch_index,
            points: chunk.to_vec(),
        });
    }
    if batches.is_empty() {
        return Err(Error::StreamTooShort {
            len: stream.len(),
            batch_size,
            msg: format!("no batch of at least {MIN_BATCH_POINTS} points"),
        });
    }
    Ok(batches)
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Built-in stream generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Seasonal sinusoid plus Gaussian noise, one phase-shifted channel per
    /// dimension.
    Sinusoid,
    /// Gaussian random walk.
    Walk,
}

impl GeneratorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sinusoid" => Ok(Self::Sinusoid),
            "walk" => Ok(Self::Walk),
            other => Err(Error::UnknownGenerator(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sinusoid => "sinusoid",
            Self::Walk => "walk",
        }
    }
}

/// Abrupt regime change injected into a synthetic stream: from `at` onward
/// every dimension is offset by `mean_shift` (raw units). The shift itself
/// is not labeled anomalous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSpec {
    pub at: usize,
    pub mean_shift: f64,
}

/// Configuration of a synthetic stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub kind: GeneratorKind,
    pub length: usize,
    /// Fraction of points turned into labeled spikes, in `[0, 0.5)`.
    pub anomaly_rate: f64,
    pub drift: Option<DriftSpec>,
    pub seed: u64,
    pub dimension: usize,
    pub period: usize,
    pub amplitude: f64,
    pub noise: f64,
    /// Spike magnitude in multiples of the series' marginal standard
    /// deviation.
    pub spike_magnitude: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Sinusoid,
            length: 20_000,
            anomaly_rate: 0.01,
            drift: None,
            seed: 7,
            dimension: 1,
            period: 64,
            amplitude: 1.0,
            noise: 0.1,
            spike_magnitude: 6.0,
        }
    }
}

impl SynthConfig {
    /// Parses a CLI generator spec of the form `kind:key=value,key=value`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind_str, params) = match spec.split_once(':') {
            Some((k, p)) => (k, p),
            None => (spec, ""),
        };
        let mut cfg = SynthConfig {
            kind: GeneratorKind::parse(kind_str)?,
            ..Default::default()
        };
        if params.is_empty() {
            return Ok(cfg);
        }
        for kv in params.split(',') {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::BadGeneratorSpec(format!("`{kv}` is not key=value")))?;
            let bad = || Error::BadGeneratorSpec(format!("bad value for `{key}`: `{value}`"));
            match key {
                "length" => cfg.length = value.parse().map_err(|_| bad())?,
                "rate" => cfg.anomaly_rate = value.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
                "dim" => cfg.dimension = value.parse().map_err(|_| bad())?,
                "period" => cfg.period = value.parse().map_err(|_| bad())?,
                "amplitude" => cfg.amplitude = value.parse().map_err(|_| bad())?,
                "noise" => cfg.noise = value.parse().map_err(|_| bad())?,
                "spike" => cfg.spike_magnitude = value.parse().map_err(|_| bad())?,
                "shift_at" => {
                    let at: usize = value.parse().map_err(|_| bad())?;
                    let shift = cfg.drift.map_or(0.0, |d| d.mean_shift);
                    cfg.drift = Some(DriftSpec {
                        at,
                        mean_shift: shift,
                    });
                }
                "shift" => {
                    let shift: f64 = value.parse().map_err(|_| bad())?;
                    let at = cfg.drift.map_or(cfg.length / 2, |d| d.at);
                    cfg.drift = Some(DriftSpec {
                        at,
                        mean_shift: shift,
                    });
                }
                other => {
                    return Err(Error::BadGeneratorSpec(format!("unknown key `{other}`")));
                }
            }
        }
        Ok(cfg)
    }

    /// Marginal standard deviation of the base (anomaly-free, pre-drift)
    /// process; spikes are expressed in multiples of this.
    pub fn marginal_std(&self) -> f64 {
        match self.kind {
            GeneratorKind::Sinusoid => {
                (self.amplitude * self.amplitude / 2.0 + self.noise * self.noise).sqrt()
            }
            GeneratorKind::Walk => self.noise.max(1e-9),
        }
    }
}

/// Generates a labeled synthetic stream. Identical configs produce
/// identical streams.
pub fn synth_stream(cfg: &SynthConfig) -> Result<LabeledStream> {
    if !(0.0..0.5).contains(&cfg.anomaly_rate) {
        return Err(Error::InvalidConfig(format!(
            "anomaly_rate must lie in [0, 0.5), got {}",
            cfg.anomaly_rate
        )));
    }
    if cfg.length == 0 || cfg.dimension == 0 {
        return Err(Error::InvalidConfig("length and dim must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise.max(1e-12)).expect("valid std");
    let d = cfg.dimension;

    let mut values: Vec<Vec<f64>> = Vec::with_capacity(cfg.length);
    match cfg.kind {
        GeneratorKind::Sinusoid => {
            let period = cfg.period.max(2) as f64;
            for t in 0..cfg.length {
                let mut row = Vec::with_capacity(d);
                for k in 0..d {
                    let phase = k as f64 * std::f64::consts::PI / 3.0;
                    let base = cfg.amplitude
                        * ((t as f64) * std::f64::consts::TAU / period + phase).sin();
                    row.push(base + noise.sample(&mut rng));
                }
                values.push(row);
            }
        }
        GeneratorKind::Walk => {
            let mut state = vec![0.0; d];
            for _ in 0..cfg.length {
                for s in state.iter_mut() {
                    *s += noise.sample(&mut rng);
                }
                values.push(state.clone());
            }
        }
    }

    if let Some(drift) = cfg.drift {
        for row in values.iter_mut().skip(drift.at) {
            for v in row.iter_mut() {
                *v += drift.mean_shift;
            }
        }
    }

    // Spike injection: sample exactly floor(rate * length) distinct indices.
    let n_spikes = (cfg.anomaly_rate * cfg.length as f64).floor() as usize;
    let mut labels = vec![false; cfg.length];
    if n_spikes > 0 {
        let mut idx: Vec<usize> = (0..cfg.length).collect();
        idx.shuffle(&mut rng);
        let magnitude = cfg.spike_magnitude * cfg.marginal_std();
        for &i in idx.iter().take(n_spikes) {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for v in values[i].iter_mut() {
                *v += sign * magnitude;
            }
            labels[i] = true;
        }
    }

    let points = values
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(index, (values, label))| TimePoint {
            index,
            values,
            label: Some(label),
        })
        .collect();

    Ok(LabeledStream {
        dimension: d,
        points,
        name: format!("{}-{}", cfg.kind.name(), cfg.seed),
    })
}

// ---------------------------------------------------------------------------
// Online standardization
// ---------------------------------------------------------------------------

/// Per-dimension running standardizer (Welford). Each point is transformed
/// with the statistics of all *preceding* points and then absorbed, so the
/// output is independent of how the stream is batched.
#[derive(Debug, Clone)]
pub struct Standardizer {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Standardizer {
    pub fn new(dimension: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dimension],
            m2: vec![0.0; dimension],
        }
    }

    fn transform(&self, values: &[f64]) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; values.len()];
        }
        let n = self.count as f64;
        values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let var = self.m2[k] / n;
                (v - self.mean[k]) / var.sqrt().max(1e-9)
            })
            .collect()
    }

    fn absorb(&mut self, values: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for (k, &v) in values.iter().enumerate() {
            let delta = v - self.mean[k];
            self.mean[k] += delta / n;
            self.m2[k] += delta * (v - self.mean[k]);
        }
    }

    /// Standardizes a batch point-wise and advances the running statistics.
    pub fn standardize_batch(&mut self, batch: &Batch) -> Batch {
        let points = batch
            .points
            .iter()
            .map(|p| {
                let values = self.transform(&p.values);
                self.absorb(&p.values);
                TimePoint {
                    index: p.index,
                    values,
                    label: p.label,
                }
            })
            .collect();
        Batch {
            batch_index: batch.batch_index,
            points,
        }
    }
}

/// Serializes generator parameters back into the `kind:key=value` form.
pub fn synth_spec_string(cfg: &SynthConfig) -> String {
    let mut parts: BTreeMap<&str, String> = BTreeMap::new();
    parts.insert("length", cfg.length.to_string());
    parts.insert("rate", cfg.anomaly_rate.to_string());
    parts.insert("seed", cfg.seed.to_string());
    parts.insert("dim", cfg.dimension.to_string());
    parts.insert("period", cfg.period.to_string());
    parts.insert("amplitude", cfg.amplitude.to_string());
    parts.insert("noise", cfg.noise.to_string());
    parts.insert("spike", cfg.spike_magnitude.to_string());
    if let Some(d) = cfg.drift {
        parts.insert("shift_at", d.at.to_string());
        parts.insert("shift", d.mean_shift.to_string());
    }
    let params: Vec<String> = parts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{}:{}", cfg.kind.name(), params.join(","))
}
