//! Experiment driver: encodes a sequence with two searchers over a QP
//! ladder, persists the runs and derives the comparison metrics.
//!
//! Files written to the output directory:
//!
//! * `<sequence>_<searcher>.json`: one [`RunResult`] per searcher;
//! * `comparison.csv`: `sequence,e,h,bdbr,bdt_nodes,bdt_wall,ratio`;
//! * `scatter.csv`: `e,h,bdbr,bdt_nodes,bdt_wall,ratio`;
//! * optionally `schedule.csv` and `<sequence>_<searcher>_qp<qp>.maps`.
//!
//! An undefined ratio is written as an empty CSV field and `null` in JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bd::{bd_delta, bd_ratio, bd_time, RdPoint, MIN_POINTS};
use crate::codec::MAX_QP;
use crate::complexity::sequence_complexity;
use crate::error::{Error, Result};
use crate::frame_io::VideoSequence;
use crate::gop::build_schedule;
use crate::search::{encode_sequence, EncoderOptions, QpRun, SearcherKind};

pub const SCHEMA_VERSION: &str = "1.0";
pub const DEFAULT_QPS: [i32; 4] = [22, 27, 32, 37];
/// Environment variable overriding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "ETRF_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "etrf-out";

/// `explicit`, else `$ETRF_OUTPUT_DIR`, else `etrf-out`.
pub fn resolve_output_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Sequence name used in file names and report rows.
    pub name: String,
    pub anchor: SearcherKind,
    pub test: SearcherKind,
    pub qps: Vec<i32>,
    pub frame_limit: Option<usize>,
    pub output_dir: PathBuf,
    pub parallel: bool,
    pub dump_maps: bool,
    pub dump_schedule: bool,
}

impl RunConfig {
    pub fn new(name: impl Into<String>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            name: name.into(),
            anchor: SearcherKind::Exhaustive,
            test: SearcherKind::Etrf,
            qps: DEFAULT_QPS.to_vec(),
            frame_limit: None,
            output_dir: output_dir.into(),
            parallel: true,
            dump_maps: false,
            dump_schedule: false,
        }
    }

    pub fn validate(&self, need_bd: bool) -> Result<()> {
        if self.qps.is_empty() {
            return Err(Error::Config("qp list is empty".into()));
        }
        if let Some(&qp) = self.qps.iter().find(|q| !(0..=MAX_QP).contains(*q)) {
            return Err(Error::QpOutOfRange(qp));
        }
        if need_bd && self.qps.len() < MIN_POINTS {
            return Err(Error::Config(format!(
                "BD metrics need at least {MIN_POINTS} QPs, got {}",
                self.qps.len()
            )));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid sequence name {:?}", self.name)));
        }
        Ok(())
    }
}

/// Persisted result of one searcher over the QP ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub version: String,
    pub sequence: String,
    pub searcher: SearcherKind,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// `(bits, mean PSNR)` per QP, in QP order.
    pub points: Vec<RdPoint>,
    pub runs: Vec<QpRun>,
}

impl RunResult {
    pub fn from_runs(sequence: &str, searcher: SearcherKind, seq: &VideoSequence, runs: Vec<QpRun>) -> Self {
        RunResult {
            version: SCHEMA_VERSION.to_string(),
            sequence: sequence.to_string(),
            searcher,
            width: seq.width(),
            height: seq.height(),
            frames: seq.len(),
            points: runs.iter().map(|r| RdPoint::new(r.bits as f64, r.psnr)).collect(),
            runs,
        }
    }

    /// Points with encoder effort on the rate axis.
    pub fn node_points(&self) -> Vec<RdPoint> {
        self.runs
            .iter()
            .map(|r| RdPoint::new(r.rd_nodes as f64, r.psnr))
            .collect()
    }

    pub fn wall_points(&self) -> Vec<RdPoint> {
        self.runs
            .iter()
            .map(|r| RdPoint::new(r.wall_seconds, r.psnr))
            .collect()
    }

    /// `qp,bits,psnr,rd_nodes,wall_seconds`, one row per QP.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("qp,bits,psnr,rd_nodes,wall_seconds\n");
        for r in &self.runs {
            out.push_str(&format!("{},{},{},{},{}\n", r.qp, r.bits, r.psnr, r.rd_nodes, r.wall_seconds));
        }
        out
    }
}

pub fn persist_run(path: &Path, run: &RunResult) -> Result<()> {
    let json = serde_json::to_string_pretty(run)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn parse_run(text: &str) -> Result<RunResult> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Schema("missing version field".into()))?;
    let major = |v: &str| v.split('.').next().and_then(|m| m.parse::<u32>().ok());
    let ours = major(SCHEMA_VERSION).expect("valid schema version");
    match major(version) {
        Some(m) if m == ours => Ok(serde_json::from_value(value)?),
        Some(m) if m > ours => Err(Error::Schema(format!(
            "file version {version} is newer than supported {SCHEMA_VERSION}"
        ))),
        _ => Err(Error::Schema(format!("unsupported version {version}"))),
    }
}

pub fn load_run(path: &Path) -> Result<RunResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text)
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub sequence: String,
    pub e_spatial: f64,
    pub h_temporal: f64,
    pub bdbr_percent: f64,
    /// Saving in `rd_nodes`; deterministic.
    pub bdt_nodes_percent: f64,
    /// Saving in wall-clock time; `None` when a run was too fast to time.
    pub bdt_wall_percent: Option<f64>,
    /// `bdbr / bdt_nodes`, `None` when the node saving is zero.
    pub ratio: Option<f64>,
}

impl ComparisonRow {
    /// Compares `test` against `anchor`.
    pub fn from_runs(sequence: &str, e: f64, h: f64, anchor: &RunResult, test: &RunResult) -> Result<Self> {
        let bdbr = bd_delta(&anchor.points, &test.points)?;
        let bdt_nodes = bd_time(&anchor.node_points(), &test.node_points())?;
        let bdt_wall = bd_time(&anchor.wall_points(), &test.wall_points()).ok();
        Ok(ComparisonRow {
            sequence: sequence.to_string(),
            e_spatial: e,
            h_temporal: h,
            bdbr_percent: bdbr,
            bdt_nodes_percent: bdt_nodes,
            bdt_wall_percent: bdt_wall,
            ratio: bd_ratio(bdbr, bdt_nodes),
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("sequence,e,h,bdbr,bdt_nodes,bdt_wall,ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.sequence,
            r.e_spatial,
            r.h_temporal,
            r.bdbr_percent,
            r.bdt_nodes_percent,
            opt(r.bdt_wall_percent),
            opt(r.ratio)
        ));
    }
    out
}

pub fn scatter_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("e,h,bdbr,bdt_nodes,bdt_wall,ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.e_spatial,
            r.h_temporal,
            r.bdbr_percent,
            r.bdt_nodes_percent,
            opt(r.bdt_wall_percent),
            opt(r.ratio)
        ));
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn limited(seq: &VideoSequence, limit: Option<usize>) -> VideoSequence {
    let mut s = seq.clone();
    if let Some(n) = limit {
        s.truncate(n);
    }
    s
}

/// Encodes `seq` with one searcher, writing map dumps when requested.
pub fn encode_run(cfg: &RunConfig, seq: &VideoSequence, searcher: SearcherKind) -> Result<RunResult> {
    cfg.validate(false)?;
    let seq = limited(seq, cfg.frame_limit);
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    if cfg.dump_schedule {
        write_file(&cfg.output_dir.join("schedule.csv"), &build_schedule(seq.len()).to_csv())?;
    }
    let opts = EncoderOptions {
        searcher,
        parallel: cfg.parallel,
        map_override: None,
    };
    let mut dumps: Vec<(i32, Vec<(usize, String)>)> = Vec::new();
    let runs = encode_sequence(&seq, &cfg.qps, &opts, |qp, frame| {
        if !cfg.dump_maps {
            return;
        }
        if dumps.last().is_none_or(|(q, _)| *q != qp) {
            dumps.push((qp, Vec::new()));
        }
        let text: String = frame.maps.iter().map(|m| m.dump(frame.poc)).collect();
        dumps.last_mut().expect("pushed above").1.push((frame.poc, text));
    })?;
    for (qp, mut frames) in dumps {
        frames.sort_by_key(|(poc, _)| *poc);
        let path = cfg
            .output_dir
            .join(format!("{}_{}_qp{}.maps", cfg.name, searcher, qp));
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        for (_, text) in frames {
            file.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(RunResult::from_runs(&cfg.name, searcher, &seq, runs))
}

/// Runs anchor and test searchers on `seq`, persists both runs and returns
/// the comparison row.
pub fn run_experiment(cfg: &RunConfig, seq: &VideoSequence) -> Result<ComparisonRow> {
    cfg.validate(true)?;
    let limited_seq = limited(seq, cfg.frame_limit);
    let score = sequence_complexity(&limited_seq)?;
    let anchor = encode_run(cfg, seq, cfg.anchor)?;
    let test = if cfg.test == cfg.anchor {
        anchor.clone()
    } else {
        encode_run(cfg, seq, cfg.test)?
    };
    for run in [&anchor, &test] {
        let path = cfg
            .output_dir
            .join(format!("{}_{}.json", cfg.name, run.searcher));
        persist_run(&path, run)?;
    }
    ComparisonRow::from_runs(&cfg.name, score.e_spatial, score.h_temporal, &anchor, &test)
}

/// Runs every `(name, sequence)` pair with `base` settings and writes the
/// comparison and scatter tables.
pub fn run_batch(base: &RunConfig, sequences: &[(String, VideoSequence)]) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::with_capacity(sequences.len());
    for (name, seq) in sequences {
        let cfg = RunConfig {
            name: name.clone(),
            ..base.clone()
        };
        log::info!("experiment on {name}");
        rows.push(run_experiment(&cfg, seq)?);
    }
    write_file(&base.output_dir.join("comparison.csv"), &comparison_csv(&rows))?;
    write_file(&base.output_dir.join("scatter.csv"), &scatter_csv(&rows))?;
    Ok(rows)
}

/// Reads `(rate_or_time, psnr)` rows; a non-numeric first row is taken as a
/// header.
pub fn read_curve_csv(path: &Path) -> Result<Vec<RdPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curve_csv(&text)
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<RdPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Config(format!("row {} needs two columns", i + 1)));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(rate), Ok(quality)) => points.push(RdPoint::new(rate, quality)),
            _ if i == 0 => continue,
            _ => return Err(Error::Config(format!("row {} is not numeric", i + 1))),
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{scene, SceneKind};

    fn tiny(kind: SceneKind, frames: usize) -> VideoSequence {
        scene(kind, 9, 64, 64, frames).unwrap()
    }

    fn strip_wall(mut r: RunResult) -> RunResult {
        for q in &mut r.runs {
            q.wall_seconds = 0.0;
            for f in &mut q.frames {
                f.stats.wall_time = 0.0;
            }
        }
        r
    }

    #[test]
    fn output_dir_resolution() {
        assert_eq!(resolve_output_dir(Some("x".into())), PathBuf::from("x"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig::new("a", "out");
        assert!(cfg.validate(true).is_ok());
        cfg.qps = vec![22, 27, 32];
        assert!(cfg.validate(false).is_ok());
        assert!(matches!(cfg.validate(true), Err(Error::Config(_))));
        cfg.qps = vec![22, 60];
        assert!(matches!(cfg.validate(false), Err(Error::QpOutOfRange(60))));
        cfg.qps.clear();
        assert!(cfg.validate(false).is_err());
    }

    #[test]
    fn exhaustive_against_itself() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new("still", dir.path());
        cfg.test = SearcherKind::Exhaustive;
        let row = run_experiment(&cfg, &tiny(SceneKind::Panning, 3)).unwrap();
        assert_eq!(row.bdbr_percent, 0.0);
        assert_eq!(row.bdt_nodes_percent, 0.0);
        assert_eq!(row.ratio, None);
        let csv = comparison_csv(&[row]);
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn one_point_per_qp_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::new("pan", dir.path());
        run_experiment(&cfg, &tiny(SceneKind::Panning, 2)).unwrap();
        for s in ["exhaustive", "etrf"] {
            let path = dir.path().join(format!("pan_{s}.json"));
            let run = load_run(&path).unwrap();
            assert_eq!(run.points.len(), cfg.qps.len());
            assert_eq!(run.runs.len(), cfg.qps.len());
            assert_eq!(run.frames, 2);
            let again = dir.path().join("again.json");
            persist_run(&again, &run).unwrap();
            assert_eq!(load_run(&again).unwrap(), run);
        }
    }

    #[test]
    fn batch_writes_three_scatter_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new("unused", dir.path());
        cfg.frame_limit = Some(2);
        let seqs: Vec<(String, VideoSequence)> = SceneKind::ALL
            .iter()
            .map(|&k| (k.name().to_string(), tiny(k, 3)))
            .collect();
        let rows = run_batch(&cfg, &seqs).unwrap();
        assert_eq!(rows.len(), 3);
        let scatter = fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
        let lines: Vec<&str> = scatter.lines().collect();
        assert_eq!(lines[0], "e,h,bdbr,bdt_nodes,bdt_wall,ratio");
        assert_eq!(lines.len(), 4);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
        let comparison = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
        assert_eq!(comparison.lines().count(), 4);
    }

    #[test]
    fn reruns_identical_except_wall_time() {
        let seq = tiny(SceneKind::HighMotion, 3);
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new("hm", dir.path());
        cfg.qps = vec![27, 37];
        let a = strip_wall(encode_run(&cfg, &seq, SearcherKind::Etrf).unwrap());
        cfg.parallel = false;
        let b = strip_wall(encode_run(&cfg, &seq, SearcherKind::Etrf).unwrap());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn version_checks() {
        let seq = tiny(SceneKind::Static, 1);
        let run = RunResult::from_runs("s", SearcherKind::Etrf, &seq, Vec::new());
        let mut v = serde_json::to_value(&run).unwrap();
        assert_eq!(parse_run(&v.to_string()).unwrap(), run);

        v["version"] = "2.0".into();
        let err = parse_run(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("newer"), "{err}");

        v.as_object_mut().unwrap().remove("version");
        assert!(matches!(parse_run(&v.to_string()), Err(Error::Schema(_))));

        v["version"] = "0.3".into();
        assert!(matches!(parse_run(&v.to_string()), Err(Error::Schema(_))));
    }

    #[test]
    fn dumps_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new("d", dir.path());
        cfg.qps = vec![32];
        cfg.dump_maps = true;
        cfg.dump_schedule = true;
        encode_run(&cfg, &tiny(SceneKind::Static, 3), SearcherKind::Etrf).unwrap();
        let maps = fs::read_to_string(dir.path().join("d_etrf_qp32.maps")).unwrap();
        // Three frames of one CTU: a header and two rows of 256 values each.
        assert_eq!(maps.lines().count(), 9);
        assert!(maps.starts_with("CTU 0 0 0\n"));
        let schedule = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
        assert_eq!(schedule.lines().count(), 4);
    }

    #[test]
    fn curve_csv() {
        let pts = parse_curve_csv("rate,psnr\n100, 30\n180,33\n").unwrap();
        assert_eq!(pts, vec![RdPoint::new(100.0, 30.0), RdPoint::new(180.0, 33.0)]);
        assert_eq!(parse_curve_csv("1,2\n3,4\n").unwrap().len(), 2);
        assert!(parse_curve_csv("1,2\nx,4\n").is_err());
    }
}
