//! Command-line front end: run detection over a CSV or synthetic stream,
//! sweep parameters, compare ablation modes, generate streams, and turn run
//! artifacts into plot-ready CSV.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use driftpool::detectors::{builtin_arch_set, ArchitectureSpec};
use driftpool::pipeline::{ablation_mode, run, Mode, PipelineConfig, RunReport};
use driftpool::stream::{
    load_stream, synth_stream, write_stream_csv, CsvSchema, LabeledStream, SynthConfig,
};

#[derive(Parser)]
#[command(
    name = "driftpool",
    about = "Online anomaly detection with a self-pruning detector pool",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run detection over one stream and write JSONL + summary artifacts.
    Run(RunArgs),
    /// Re-run detection for each value of one parameter (or an alpha,beta
    /// grid) and tabulate AUC/ADT.
    Sweep(SweepArgs),
    /// Compare the ablation modes on one stream.
    Ablate(RunArgs),
    /// Generate a synthetic stream as CSV.
    Synth(SynthArgs),
    /// Summarize run artifacts into plot-ready CSV (drift trace, graphs).
    Report(ReportArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV stream file (header row; numeric columns are values, an optional
    /// `label` column holds 0/1 ground truth).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic generator spec, e.g. `sinusoid:length=20000,rate=0.01,seed=7`.
    #[arg(long)]
    synth: Option<String>,
    /// Label column name override.
    #[arg(long)]
    label_column: Option<String>,
    /// Value column names (comma separated); default: every numeric column.
    #[arg(long, value_delimiter = ',')]
    value_columns: Vec<String>,
}

impl InputArgs {
    fn load(&self) -> Result<LabeledStream> {
        match (&self.input, &self.synth) {
            (Some(path), None) => {
                let schema = CsvSchema {
                    value_columns: self.value_columns.clone(),
                    label_column: self.label_column.clone(),
                };
                Ok(load_stream(path, &schema)?)
            }
            (None, Some(spec)) => Ok(synth_stream(&SynthConfig::parse(spec)?)?),
            _ => bail!("exactly one of --input or --synth is required"),
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (key = value sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "DRIFTPOOL_OUT", default_value = "out")]
    out: PathBuf,
    /// Run seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    common: CommonArgs,
    /// Pipeline mode (overrides the config file).
    #[arg(long)]
    mode: Option<String>,
    /// Embed per-batch model graphs in the JSONL and write edge-list dumps.
    #[arg(long)]
    dump_graphs: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    common: CommonArgs,
    /// Parameter to sweep: theta_drift, resolution, alpha, beta, gamma,
    /// batch_size — or `alpha,beta` for a grid.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec `kind:key=value,...`.
    #[arg(long)]
    synth: String,
    #[arg(long, env = "DRIFTPOOL_OUT", default_value = "out")]
    out: PathBuf,
    /// Seed override for the generator.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding run.jsonl and summary.json from a previous run.
    #[arg(long, env = "DRIFTPOOL_OUT", default_value = "out")]
    out: PathBuf,
}

fn effective_setup(
    common: &CommonArgs,
    mode: Option<&str>,
    dump_graphs: bool,
) -> Result<(PipelineConfig, Vec<ArchitectureSpec>)> {
    let file = match &common.config {
        Some(path) => config::load(path)?,
        None => config::FileConfig::default(),
    };
    let mut cfg = file.pipeline.apply(&PipelineConfig::default())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = mode {
        cfg.mode = Mode::parse(mode)?;
    }
    cfg.record_graphs = dump_graphs;
    cfg.validate()?;
    let arch = file.detectors.unwrap_or_else(builtin_arch_set);
    Ok((cfg, arch))
}

fn write_artifacts(out: &Path, report: &RunReport, dump_graphs: bool) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("run.jsonl"), report.to_jsonl())?;
    let summary = serde_json::to_string_pretty(&report.summary_json())?;
    fs::write(out.join("summary.json"), summary)?;
    if dump_graphs {
        let dir = out.join("graphs");
        fs::create_dir_all(&dir)?;
        for b in &report.batches {
            if let Some(g) = &b.graph {
                fs::write(dir.join(format!("batch_{:04}.edges", b.batch_index)), g.to_edge_list())?;
            }
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let stream = args.input.load()?;
    let (cfg, arch) = effective_setup(&args.common, args.mode.as_deref(), args.dump_graphs)?;
    let report = run(&stream, &arch, &cfg)?;
    write_artifacts(&args.common.out, &report, args.dump_graphs)?;

    match report.auc {
        Some(auc) => println!("auc {auc:.6}"),
        None => println!("auc n/a (stream without both label classes)"),
    }
    println!("adt_ms {:.6}", report.adt_ms);
    println!(
        "drift_batches {:?} pool {} alarms {}",
        report.drift_batches,
        report.final_pool.size,
        report.alarm_count()
    );
    println!("artifacts in {}", args.common.out.display());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.values.is_empty() {
        bail!("--values must not be empty");
    }
    let stream = args.input.load()?;
    let (base, arch) = effective_setup(&args.common, None, false)?;
    fs::create_dir_all(&args.common.out)?;

    let set = |cfg: &mut PipelineConfig, param: &str, v: f64| -> Result<()> {
        match param {
            "theta_drift" => cfg.theta_drift = v,
            "resolution" => cfg.resolution = v,
            "alpha" => cfg.alpha = v,
            "beta" => cfg.beta = v,
            "gamma" => cfg.gamma = v,
            "batch_size" => cfg.batch_size = v as usize,
            other => bail!("unknown sweep parameter `{other}`"),
        }
        Ok(())
    };

    let path = args
        .common
        .out
        .join(format!("sweep_{}.csv", args.param.replace(',', "_")));
    let mut csv = String::new();
    if args.param == "alpha,beta" {
        // grid over the same values on both axes (heatmap data)
        csv.push_str("alpha,beta,auc,adt_ms\n");
        for &a in &args.values {
            for &b in &args.values {
                let mut cfg = base.clone();
                cfg.alpha = a;
                cfg.beta = b;
                cfg.validate()?;
                let report = run(&stream, &arch, &cfg)?;
                csv.push_str(&format!(
                    "{a},{b},{},{}\n",
                    report.auc.map_or(String::from(""), |x| x.to_string()),
                    report.adt_ms
                ));
            }
        }
    } else {
        csv.push_str("value,auc,adt_ms\n");
        for &v in &args.values {
            let mut cfg = base.clone();
            set(&mut cfg, &args.param, v)?;
            cfg.validate()?;
            let report = run(&stream, &arch, &cfg)?;
            csv.push_str(&format!(
                "{v},{},{}\n",
                report.auc.map_or(String::from(""), |x| x.to_string()),
                report.adt_ms
            ));
        }
    }
    fs::write(&path, csv)?;
    println!("sweep table written to {}", path.display());
    Ok(())
}

fn cmd_ablate(args: &RunArgs) -> Result<()> {
    let stream = args.input.load()?;
    let (base, arch) = effective_setup(&args.common, None, false)?;
    fs::create_dir_all(&args.common.out)?;

    let mut csv = String::from("mode,auc,adt_ms,mean_communities,major_updates\n");
    for mode in Mode::ablation_roster() {
        let cfg = ablation_mode(&base, mode);
        let report = run(&stream, &arch, &cfg)?;
        let mean_comms = report
            .batches
            .iter()
            .map(|b| b.community_sizes.len() as f64)
            .sum::<f64>()
            / report.batches.len() as f64;
        csv.push_str(&format!(
            "{},{},{},{mean_comms},{}\n",
            mode.name(),
            report.auc.map_or(String::from(""), |x| x.to_string()),
            report.adt_ms,
            report.drift_batches.len()
        ));
        println!(
            "{:<18} auc {:<22} adt_ms {:.6}",
            mode.name(),
            report.auc.map_or(String::from("n/a"), |x| format!("{x:.6}")),
            report.adt_ms
        );
    }
    let path = args.common.out.join("ablate.csv");
    fs::write(&path, csv)?;
    println!("ablation table written to {}", path.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::parse(&args.synth)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let stream = synth_stream(&cfg)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join(format!("{}.csv", stream.name));
    let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
    write_stream_csv(&stream, &mut file)?;
    file.flush()?;
    println!(
        "wrote {} points (dim {}) to {}",
        stream.len(),
        stream.dimension,
        path.display()
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let summary_path = args.out.join("summary.json");
    let jsonl_path = args.out.join("run.jsonl");
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(&summary_path)
            .with_context(|| format!("reading {}", summary_path.display()))?,
    )?;
    let jsonl = fs::read_to_string(&jsonl_path)
        .with_context(|| format!("reading {}", jsonl_path.display()))?;

    println!(
        "stream {} mode {} seed {}",
        summary["stream"], summary["mode"], summary["seed"]
    );
    println!(
        "auc {} adt_ms {} alarms {} drift_batches {}",
        summary["auc"], summary["adt_ms"], summary["alarms"], summary["drift_batches"]
    );
    println!("final pool: {}", summary["final_pool"]);

    // drift trace for plotting
    let mut drift_csv = String::from(
        "t,d_cent,d_comm,drift,drifted,update,pool_size,n_communities,n_representatives,alarm\n",
    );
    let mut graphs = 0;
    let graph_dir = args.out.join("graphs");
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line)?;
        drift_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            v["t"],
            v["d_cent"],
            v["d_comm"],
            v["drift"],
            v["drifted"],
            v["update"].as_str().unwrap_or(""),
            v["pool_size"],
            v["communities"].as_array().map_or(0, |a| a.len()),
            v["representatives"].as_array().map_or(0, |a| a.len()),
            v["alarm"],
        ));
        // extract embedded graph snapshots into edge-list files
        if let Some(graph) = v.get("graph") {
            fs::create_dir_all(&graph_dir)?;
            let mut edges = String::new();
            for e in graph["edges"].as_array().unwrap_or(&Vec::new()) {
                edges.push_str(&format!("{} {} {}\n", e[0], e[1], e[2]));
            }
            fs::write(
                graph_dir.join(format!("batch_{:04}.edges", v["t"].as_u64().unwrap_or(0))),
                edges,
            )?;
            graphs += 1;
        }
    }
    let drift_path = args.out.join("drift.csv");
    fs::write(&drift_path, drift_csv)?;
    println!("drift trace written to {}", drift_path.display());
    if graphs > 0 {
        println!("{graphs} graph edge lists written to {}", graph_dir.display());
    }
    Ok(())
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(err) = result {
        eprintln!("driftpool: {err:#}");
        std::process::exit(1);
    }
}
