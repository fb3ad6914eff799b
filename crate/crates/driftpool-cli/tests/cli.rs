//! End-to-end CLI tests driving the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn driftpool(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftpool"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SYNTH: &str = "sinusoid:length=2560,rate=0.02,seed=3,noise=0.3,spike=3";

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.txt");
    std::fs::write(
        &path,
        "[pipeline]\nbatch_size = 128\nseed = 7\n",
    )
    .unwrap();
    path
}

#[test]
fn run_writes_summary_and_jsonl() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = driftpool(
        &[
            "run",
            "--synth",
            SYNTH,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "artifacts",
        ],
        tmp.path(),
    );
    let stdout = assert_ok(&out);
    assert!(stdout.contains("auc "));
    assert!(stdout.contains("adt_ms "));

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("artifacts/summary.json")).unwrap(),
    )
    .unwrap();
    for key in [
        "stream", "mode", "seed", "auc", "adt_ms", "scored_steps", "scored_batches", "alarms",
        "drift_batches", "final_pool",
    ] {
        assert!(summary.get(key).is_some(), "summary missing {key}");
    }

    let jsonl = std::fs::read_to_string(tmp.path().join("artifacts/run.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 19); // 20 batches, batch 0 trains only
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in [
            "t", "d_cent", "d_comm", "drift", "drifted", "update", "communities",
            "representatives", "pruned", "added", "pool_size", "alarm", "n_flagged",
            "predictions", "s_final", "elapsed_ms",
        ] {
            assert!(v.get(key).is_some(), "jsonl missing {key}");
        }
    }
}

#[test]
fn runs_are_deterministic_modulo_wall_clock() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    for out_dir in ["a", "b"] {
        let out = driftpool(
            &[
                "run",
                "--synth",
                SYNTH,
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "7",
                "--out",
                out_dir,
            ],
            tmp.path(),
        );
        assert_ok(&out);
    }
    let canonical_summary = |dir: &str| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(tmp.path().join(dir).join("summary.json")).unwrap(),
        )
        .unwrap();
        v.as_object_mut().unwrap().remove("adt_ms");
        v
    };
    assert_eq!(canonical_summary("a"), canonical_summary("b"));

    let canonical_jsonl = |dir: &str| -> String {
        std::fs::read_to_string(tmp.path().join(dir).join("run.jsonl"))
            .unwrap()
            .lines()
            .map(|line| {
                let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
                v.as_object_mut().unwrap().remove("elapsed_ms");
                v.to_string()
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(canonical_jsonl("a"), canonical_jsonl("b"));
}

#[test]
fn input_source_must_be_exactly_one() {
    let tmp = tempfile::tempdir().unwrap();
    let none = driftpool(&["run"], tmp.path());
    assert!(!none.status.success());

    let missing = driftpool(&["run", "--input", "nope.csv"], tmp.path());
    assert!(!missing.status.success());

    let both = driftpool(
        &["run", "--input", "nope.csv", "--synth", SYNTH],
        tmp.path(),
    );
    assert!(!both.status.success());
}

#[test]
fn sweep_emits_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = driftpool(
        &[
            "sweep",
            "--synth",
            SYNTH,
            "--config",
            cfg.to_str().unwrap(),
            "--param",
            "resolution",
            "--values",
            "0.5,1.0,2.0,4.0",
            "--out",
            "sweep",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let csv = std::fs::read_to_string(tmp.path().join("sweep/sweep_resolution.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,auc,adt_ms");
    assert_eq!(lines.len(), 5);

    // alpha,beta grid: header plus one row per cell
    let out = driftpool(
        &[
            "sweep",
            "--synth",
            SYNTH,
            "--config",
            cfg.to_str().unwrap(),
            "--param",
            "alpha,beta",
            "--values",
            "0.3,0.7",
            "--out",
            "sweep",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let csv = std::fs::read_to_string(tmp.path().join("sweep/sweep_alpha_beta.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "alpha,beta,auc,adt_ms");
    assert_eq!(lines.len(), 5);

    let bad = driftpool(
        &["sweep", "--synth", SYNTH, "--param", "warp", "--values", "1"],
        tmp.path(),
    );
    assert!(!bad.status.success());
}

#[test]
fn ablate_emits_all_five_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = driftpool(
        &[
            "ablate",
            "--synth",
            SYNTH,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "ablate",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let csv = std::fs::read_to_string(tmp.path().join("ablate/ablate.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mode,auc,adt_ms,mean_communities,major_updates");
    assert_eq!(lines.len(), 6);
    for mode in ["full", "single_community", "centrality_only", "pseudo_only", "average_ensemble"] {
        assert!(csv.contains(mode), "missing {mode} row");
    }

    // the single-community mode collapses the partition-count statistic
    let comms: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    let full = comms[0];
    let single = comms[1];
    assert!(full > single, "full {full} vs single_community {single}");
    assert_eq!(single, 1.0);
}

#[test]
fn synth_round_trips_through_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = driftpool(&["synth", "--synth", SYNTH, "--out", "data"], tmp.path());
    let stdout = assert_ok(&out);
    assert!(stdout.contains("2560 points"));

    let cfg = write_config(tmp.path());
    let out = driftpool(
        &[
            "run",
            "--input",
            "data/sinusoid-3.csv",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "fromfile",
        ],
        tmp.path(),
    );
    assert_ok(&out);

    // the generated file and the in-process generator must agree
    let direct = driftpool(
        &[
            "run",
            "--synth",
            SYNTH,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "direct",
        ],
        tmp.path(),
    );
    assert_ok(&direct);
    let read = |d: &str| {
        let mut v: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(tmp.path().join(d).join("summary.json")).unwrap(),
        )
        .unwrap();
        let map = v.as_object_mut().unwrap();
        map.remove("adt_ms");
        map.remove("stream"); // stream names differ (file stem vs generator id)
        v
    };
    assert_eq!(read("fromfile"), read("direct"));
}

#[test]
fn report_summarizes_and_extracts_graphs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = driftpool(
        &[
            "run",
            "--synth",
            SYNTH,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "artifacts",
            "--dump-graphs",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    // run --dump-graphs already writes the edge lists
    let run_graphs = std::fs::read_dir(tmp.path().join("artifacts/graphs")).unwrap().count();
    assert_eq!(run_graphs, 19);

    let out = driftpool(&["report", "--out", "artifacts"], tmp.path());
    let stdout = assert_ok(&out);
    assert!(stdout.contains("auc"));
    assert!(stdout.contains("drift trace written"));

    let drift = std::fs::read_to_string(tmp.path().join("artifacts/drift.csv")).unwrap();
    let lines: Vec<&str> = drift.lines().collect();
    assert_eq!(
        lines[0],
        "t,d_cent,d_comm,drift,drifted,update,pool_size,n_communities,n_representatives,alarm"
    );
    assert_eq!(lines.len(), 20);

    // an edge-list dump is plain `i j weight` lines
    let edges =
        std::fs::read_to_string(tmp.path().join("artifacts/graphs/batch_0001.edges")).unwrap();
    for line in edges.lines() {
        let parts: Vec<&str> = line.split(' ').collect();
        assert_eq!(parts.len(), 3);
        parts[0].parse::<u64>().unwrap();
        parts[1].parse::<u64>().unwrap();
        parts[2].parse::<f64>().unwrap();
    }
}

#[test]
fn bad_config_is_a_clean_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.txt");
    std::fs::write(&path, "[pipeline]\nalpha = 7\n").unwrap();
    let out = driftpool(
        &["run", "--synth", SYNTH, "--config", path.to_str().unwrap()],
        tmp.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("alpha"), "stderr: {stderr}");
}
