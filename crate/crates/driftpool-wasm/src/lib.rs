//! Browser bindings for the demo page: run the detector on a synthetic
//! stream, inspect one batch's model graph, and sweep the community
//! resolution. All three take and return JSON strings so the page needs no
//! generated types.

use serde::Deserialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use driftpool::detectors::builtin_arch_set;
use driftpool::pipeline::{run, Mode, PipelineConfig, RunReport};
use driftpool::stream::{synth_stream, DriftSpec, SynthConfig};

#[derive(Debug, Deserialize)]
#[serde(default)]
struct DemoParams {
    length: usize,
    rate: f64,
    noise: f64,
    spike: f64,
    period: usize,
    seed: u64,
    shift_at: Option<usize>,
    shift_sigma: f64,
    batch_size: usize,
    theta_drift: f64,
    resolution: f64,
    alpha: f64,
    beta: f64,
    mode: String,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            length: 6144,
            rate: 0.01,
            noise: 0.3,
            spike: 3.0,
            period: 64,
            seed: 7,
            shift_at: None,
            shift_sigma: 5.0,
            batch_size: 256,
            theta_drift: 0.3,
            resolution: 1.0,
            alpha: 0.5,
            beta: 0.5,
            mode: "full".into(),
        }
    }
}

impl DemoParams {
    fn stream_config(&self) -> SynthConfig {
        let base = SynthConfig {
            length: self.length,
            anomaly_rate: self.rate,
            noise: self.noise,
            spike_magnitude: self.spike,
            period: self.period,
            seed: self.seed,
            ..Default::default()
        };
        let drift = self.shift_at.map(|at| DriftSpec {
            at,
            mean_shift: self.shift_sigma * base.marginal_std(),
        });
        SynthConfig { drift, ..base }
    }

    fn pipeline_config(&self, record_graphs: bool) -> Result<PipelineConfig, String> {
        let cfg = PipelineConfig {
            batch_size: self.batch_size,
            theta_drift: self.theta_drift,
            resolution: self.resolution,
            alpha: self.alpha,
            beta: self.beta,
            seed: self.seed,
            mode: Mode::parse(&self.mode).map_err(|e| e.to_string())?,
            record_graphs,
            ..Default::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn execute(params: &str, record_graphs: bool) -> Result<(DemoParams, RunReport), String> {
    let params: DemoParams = if params.trim().is_empty() {
        DemoParams::default()
    } else {
        serde_json::from_str(params).map_err(|e| format!("bad params: {e}"))?
    };
    let stream = synth_stream(&params.stream_config()).map_err(|e| e.to_string())?;
    let cfg = params.pipeline_config(record_graphs)?;
    let report = run(&stream, &builtin_arch_set(), &cfg).map_err(|e| e.to_string())?;
    Ok((params, report))
}

fn run_detection_impl(params: &str) -> Result<String, String> {
    let (params, report) = execute(params, false)?;
    let stream = synth_stream(&params.stream_config()).map_err(|e| e.to_string())?;

    let values: Vec<f64> = stream.points.iter().map(|p| p.values[0]).collect();
    let labels: Vec<u8> = stream
        .points
        .iter()
        .map(|p| (p.label == Some(true)) as u8)
        .collect();
    let batches: Vec<serde_json::Value> = report
        .batches
        .iter()
        .map(|b| {
            json!({
                "t": b.batch_index,
                "d_cent": b.drift.d_cent,
                "d_comm": b.drift.d_comm,
                "drift": b.drift.combined,
                "drifted": b.drift.drifted,
                "communities": b.community_sizes,
                "representatives": b.representatives.iter().map(|id| id.0).collect::<Vec<_>>(),
                "pool_size": b.pool_size,
            })
        })
        .collect();

    Ok(json!({
        "length": stream.len(),
        "batch_size": params.batch_size,
        "score_offset": params.batch_size, // batch 0 only trains
        "values": values,
        "labels": labels,
        "scores": report.all_scores(),
        "predictions": report.all_predictions(),
        "batches": batches,
        "drift_batches": report.drift_batches,
        "auc": report.auc,
        "adt_ms": report.adt_ms,
        "final_pool": report.final_pool,
    })
    .to_string())
}

fn graph_snapshot_impl(params: &str, batch_index: usize) -> Result<String, String> {
    let (_, report) = execute(params, true)?;
    let batch = report
        .batches
        .iter()
        .find(|b| b.batch_index == batch_index)
        .or_else(|| report.batches.last())
        .ok_or_else(|| "no scored batches".to_string())?;
    let graph = batch.graph.as_ref().ok_or_else(|| "no graph recorded".to_string())?;
    Ok(json!({
        "t": batch.batch_index,
        "nodes": graph.nodes,
        "edges": graph.edges,
        "communities": graph.communities,
        "representatives": graph.representatives,
        "drift": batch.drift.combined,
        "drifted": batch.drift.drifted,
        "max_t": report.batches.last().map(|b| b.batch_index),
    })
    .to_string())
}

fn sweep_resolution_impl(params: &str, resolutions: &str) -> Result<String, String> {
    let values: Vec<f64> = serde_json::from_str(resolutions)
        .map_err(|e| format!("bad resolution list: {e}"))?;
    if values.is_empty() || values.iter().any(|&v| v <= 0.0) {
        return Err("resolutions must be positive".into());
    }
    let base: DemoParams = if params.trim().is_empty() {
        DemoParams::default()
    } else {
        serde_json::from_str(params).map_err(|e| format!("bad params: {e}"))?
    };
    let stream = synth_stream(&base.stream_config()).map_err(|e| e.to_string())?;
    let arch = builtin_arch_set();

    let mut rows = Vec::new();
    for &resolution in &values {
        let mut cfg = base.pipeline_config(false)?;
        cfg.resolution = resolution;
        let report = run(&stream, &arch, &cfg).map_err(|e| e.to_string())?;
        let mean_comms = report
            .batches
            .iter()
            .map(|b| b.community_sizes.len() as f64)
            .sum::<f64>()
            / report.batches.len() as f64;
        rows.push(json!({
            "resolution": resolution,
            "auc": report.auc,
            "mean_communities": mean_comms,
            "major_updates": report.drift_batches.len(),
        }));
    }
    Ok(json!(rows).to_string())
}

/// Runs the detector over a synthetic stream; `params` is a JSON object
/// (empty string for defaults). Returns series, scores, predictions and the
/// per-batch drift trace as JSON.
#[wasm_bindgen]
pub fn run_detection(params: &str) -> Result<String, JsValue> {
    run_detection_impl(params).map_err(|e| JsValue::from_str(&e))
}

/// Returns one scored batch's model graph (nodes with families, signed
/// edges, communities, representatives) as JSON.
#[wasm_bindgen]
pub fn graph_snapshot(params: &str, batch_index: usize) -> Result<String, JsValue> {
    graph_snapshot_impl(params, batch_index).map_err(|e| JsValue::from_str(&e))
}

/// Re-runs the detector at each resolution in `resolutions` (JSON array of
/// positive numbers) and returns AUC and community statistics per value.
#[wasm_bindgen]
pub fn sweep_resolution(params: &str, resolutions: &str) -> Result<String, JsValue> {
    sweep_resolution_impl(params, resolutions).map_err(|e| JsValue::from_str(&e))
}

/// Default parameter set for the page's controls.
#[wasm_bindgen]
pub fn default_params() -> String {
    json!({
        "length": 6144,
        "rate": 0.01,
        "noise": 0.3,
        "spike": 3.0,
        "period": 64,
        "seed": 7,
        "shift_at": null,
        "shift_sigma": 5.0,
        "batch_size": 256,
        "theta_drift": 0.3,
        "resolution": 1.0,
        "alpha": 0.5,
        "beta": 0.5,
        "mode": "full",
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_detection_returns_consistent_payload() {
        let out = run_detection_impl("").unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let length = v["length"].as_u64().unwrap() as usize;
        let offset = v["score_offset"].as_u64().unwrap() as usize;
        let scores = v["scores"].as_array().unwrap().len();
        let preds = v["predictions"].as_array().unwrap().len();
        assert_eq!(v["values"].as_array().unwrap().len(), length);
        assert_eq!(scores, preds);
        assert_eq!(scores, length - offset);
        assert!(v["auc"].as_f64().unwrap() > 0.5);
    }

    #[test]
    fn run_detection_honors_params() {
        let out = run_detection_impl(
            r#"{"length": 2048, "batch_size": 128, "seed": 3, "shift_at": 1024}"#,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["length"], 2048);
        assert_eq!(v["batches"].as_array().unwrap().len(), 15);
        assert!(run_detection_impl("{bogus").is_err());
        assert!(run_detection_impl(r#"{"alpha": 9}"#).is_err());
    }

    #[test]
    fn graph_snapshot_covers_the_pool() {
        let out = graph_snapshot_impl(r#"{"length": 2048, "batch_size": 128}"#, 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["t"], 3);
        assert_eq!(v["nodes"].as_array().unwrap().len(), 12);
        let member_count: usize = v["communities"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_array().unwrap().len())
            .sum();
        assert_eq!(member_count, 12);
        assert!(!v["representatives"].as_array().unwrap().is_empty());
    }

    #[test]
    fn resolution_sweep_spans_selection_to_average() {
        let out = sweep_resolution_impl(
            r#"{"length": 2048, "batch_size": 128}"#,
            "[0.01, 1.0, 100.0]",
        )
        .unwrap();
        let rows: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
        assert_eq!(rows.len(), 3);
        // low resolution: one community; high: all singletons
        assert_eq!(rows[0]["mean_communities"], 1.0);
        assert_eq!(rows[2]["mean_communities"], 12.0);
    }
}
