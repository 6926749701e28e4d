use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use etrf_core::bd::{bd_delta, bd_ratio, bd_time};
use etrf_core::complexity::sequence_complexity;
use etrf_core::frame_io::{load_raw, load_y4m, ChromaFormat, VideoSequence};
use etrf_core::report::{
    self, encode_run, persist_run, read_curve_csv, resolve_output_dir, run_batch, RunConfig,
    DEFAULT_QPS,
};
use etrf_core::search::SearcherKind;
use etrf_core::synth::{scene, SceneKind, DEFAULT_FRAMES, DEFAULT_SIZE};

#[derive(Parser)]
#[command(name = "etrf", version, about = "QTMT partition search laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode one sequence with one searcher over a QP ladder.
    Encode(EncodeArgs),
    /// Bjontegaard deltas between two (rate, psnr) CSV curves.
    Bd(BdArgs),
    /// Spatial and temporal complexity of each input.
    Complexity(ComplexityArgs),
    /// Compare exhaustive and reference-guided search on several inputs.
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// Raw luma geometry, required for non-Y4M inputs.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Raw input chroma layout: 420 or 400.
    #[arg(long, default_value = "420")]
    chroma: ChromaFormat,
    /// Maximum number of frames to read.
    #[arg(long)]
    frames: Option<usize>,
    /// Seed for synthetic scenes.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Comma-separated QP list.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_QPS)]
    qp: Vec<i32>,
    #[arg(long, env = report::OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    /// Search CTUs of a frame one at a time.
    #[arg(long)]
    sequential: bool,
    /// Write per-frame partition maps.
    #[arg(long)]
    dump_maps: bool,
    /// Write the coding schedule as CSV.
    #[arg(long)]
    dump_schedule: bool,
}

#[derive(Args)]
struct EncodeArgs {
    /// Y4M or raw file; `synth:<scene>` selects a synthetic scene.
    #[arg(long)]
    input: String,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "exhaustive")]
    searcher: SearcherKind,
    #[command(flatten)]
    common: CommonArgs,
    /// Write the run as JSON.
    #[arg(long)]
    report: bool,
    /// Write per-QP totals as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct BdArgs {
    /// Anchor (rate, psnr) curve.
    anchor: PathBuf,
    /// Test (rate, psnr) curve.
    test: PathBuf,
    /// Anchor (seconds, psnr) curve.
    #[arg(long, requires = "test_time")]
    anchor_time: Option<PathBuf>,
    /// Test (seconds, psnr) curve.
    #[arg(long, requires = "anchor_time")]
    test_time: Option<PathBuf>,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(required = true)]
    inputs: Vec<String>,
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Inputs to compare; defaults to the three synthetic scenes.
    inputs: Vec<String>,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    common: CommonArgs,
}

const SYNTH_PREFIX: &str = "synth:";

fn sequence_name(input: &str) -> String {
    match input.strip_prefix(SYNTH_PREFIX) {
        Some(kind) => kind.to_string(),
        None => Path::new(input)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".to_string()),
    }
}

fn load_sequence(input: &str, src: &SourceArgs) -> Result<VideoSequence> {
    let mut seq = if let Some(kind) = input.strip_prefix(SYNTH_PREFIX) {
        let kind: SceneKind = kind.parse()?;
        scene(
            kind,
            src.seed,
            src.width.unwrap_or(DEFAULT_SIZE),
            src.height.unwrap_or(DEFAULT_SIZE),
            src.frames.unwrap_or(DEFAULT_FRAMES),
        )?
    } else if input.ends_with(".y4m") {
        load_y4m(input)?
    } else {
        let (Some(w), Some(h)) = (src.width, src.height) else {
            bail!("raw input {input} needs --width and --height");
        };
        let count = match src.frames {
            Some(n) => n,
            None => {
                let len = std::fs::metadata(input).with_context(|| format!("reading {input}"))?.len();
                len as usize / src.chroma.frame_bytes(w, h)
            }
        };
        load_raw(input, w, h, count, src.chroma)?
    };
    if let Some(n) = src.frames {
        seq.truncate(n);
    }
    Ok(seq)
}

fn run_config(name: String, common: &CommonArgs) -> RunConfig {
    let mut cfg = RunConfig::new(name, resolve_output_dir(common.output_dir.clone()));
    cfg.qps = common.qp.clone();
    cfg.parallel = !common.sequential;
    cfg.dump_maps = common.dump_maps;
    cfg.dump_schedule = common.dump_schedule;
    cfg
}

fn encode(args: EncodeArgs) -> Result<()> {
    let seq = load_sequence(&args.input, &args.source)?;
    let cfg = run_config(sequence_name(&args.input), &args.common);
    let run = encode_run(&cfg, &seq, args.searcher)?;
    let stem = format!("{}_{}", cfg.name, args.searcher);
    if args.report {
        let path = cfg.output_dir.join(format!("{stem}.json"));
        persist_run(&path, &run)?;
        log::info!("wrote {}", path.display());
    }
    if args.csv {
        let path = cfg.output_dir.join(format!("{stem}.csv"));
        std::fs::write(&path, run.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
    }
    for r in &run.runs {
        println!(
            "{}",
            json!({
                "qp": r.qp,
                "bits": r.bits,
                "psnr": r.psnr,
                "rd_nodes": r.rd_nodes,
                "wall_seconds": r.wall_seconds,
            })
        );
    }
    Ok(())
}

fn bd(args: BdArgs) -> Result<()> {
    let anchor = read_curve_csv(&args.anchor)?;
    let test = read_curve_csv(&args.test)?;
    let bdbr = bd_delta(&anchor, &test)?;
    let bdt = match (&args.anchor_time, &args.test_time) {
        (Some(a), Some(t)) => Some(bd_time(&read_curve_csv(a)?, &read_curve_csv(t)?)?),
        _ => None,
    };
    let ratio = bdt.and_then(|t| bd_ratio(bdbr, t));
    println!(
        "{}",
        json!({ "bdbr_percent": bdbr, "bdt_percent": bdt, "ratio": ratio })
    );
    Ok(())
}

fn complexity(args: ComplexityArgs) -> Result<()> {
    for input in &args.inputs {
        let seq = load_sequence(input, &args.source)?;
        let score = sequence_complexity(&seq)?;
        println!(
            "{}",
            json!({ "input": input, "e": score.e_spatial, "h": score.h_temporal })
        );
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let inputs: Vec<String> = if args.inputs.is_empty() {
        SceneKind::ALL
            .iter()
            .map(|k| format!("{SYNTH_PREFIX}{}", k.name()))
            .collect()
    } else {
        args.inputs.clone()
    };
    let sequences = inputs
        .iter()
        .map(|i| Ok((sequence_name(i), load_sequence(i, &args.source)?)))
        .collect::<Result<Vec<_>>>()?;
    let base = run_config("batch".to_string(), &args.common);
    let rows = run_batch(&base, &sequences)?;
    for row in &rows {
        println!("{}", serde_json::to_string(row)?);
    }
    log::info!("results in {}", base.output_dir.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Encode(a) => encode(a),
        Command::Bd(a) => bd(a),
        Command::Complexity(a) => complexity(a),
        Command::Experiment(a) => experiment(a),
    }
}
