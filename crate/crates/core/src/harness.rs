//! Monte-Carlo driver: single trials, axis sweeps, CSV persistence and the
//! required-Eb/N0 search.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channels, draw_messages, false_alarms, pupe, synthesize};
use crate::config::{sigma2_for_eb_n0_db, validate, SystemConfig, ValidatedConfig};
use crate::detector::InvariantMonitor;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::ldpc::LdpcCode;
use crate::linalg::RngStream;
use crate::receiver::{run_receiver, ReceiverContext};
use crate::sparc::{encode_sections, SupportMatrix};

/// Default target error probability for threshold searches.
pub const TARGET_PE: f64 = 0.05;

pub fn dictionary_stream(seed: u64) -> RngStream {
    RngStream::new(seed, u64::MAX)
}

pub fn code_stream(seed: u64) -> RngStream {
    RngStream::new(seed, u64::MAX - 1)
}

/// A validated configuration with its shared dictionary and outer code.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ValidatedConfig,
    pub dictionary: Dictionary,
    pub code: LdpcCode,
}

impl Scenario {
    pub fn build(config: &SystemConfig) -> Result<Self> {
        let config = validate(config)?;
        let dictionary =
            Dictionary::build(config.dictionary, config.blocklength, config.support_len, dictionary_stream(config.seed))?;
        let code = LdpcCode::random_regular(config.n_out, config.message_bits, code_stream(config.seed), config.bp_iters)?;
        Ok(Self { config, dictionary, code })
    }

    pub fn context(&self) -> ReceiverContext<'_> {
        ReceiverContext { config: &self.config, dictionary: &self.dictionary, code: &self.code }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub users: usize,
    /// Transmitted messages missing from the decoded list.
    pub user_errors: usize,
    pub pupe: f64,
    pub false_alarms: usize,
    pub rounds: usize,
    pub detector_iterations: usize,
    pub diverged: bool,
    pub residual_energies: Vec<f64>,
    pub invariants: InvariantMonitor,
}

/// One end-to-end trial, deterministic in `(seed, trial_id)`.
pub fn run_trial(scenario: &Scenario, trial_id: u64) -> Result<TrialRecord> {
    let cfg = &scenario.config;
    let mut rng = RngStream::new(cfg.seed, trial_id).rng();
    let messages = draw_messages(cfg.k_active, cfg.message_bits, cfg.allow_collisions, &mut rng);
    let columns = messages
        .iter()
        .map(|m| {
            let word = scenario.code.encode(&m.0, cfg.section_bits())?;
            encode_sections(&word, cfg.sections, cfg.bits_per_section)
        })
        .collect::<Result<Vec<_>>>()?;
    let channels = draw_channels(cfg.k_active, cfg.antennas, &mut rng);
    let obs = synthesize(
        &scenario.dictionary,
        &SupportMatrix { columns },
        &channels,
        messages,
        cfg.sigma2,
        cfg.power,
        &mut rng,
    )?;
    let result = run_receiver(&scenario.context(), &obs.y, &mut rng);
    let diverged = result.abort.is_some();
    let (user_errors, p) = if diverged {
        (cfg.k_active, 1.0)
    } else {
        let p = pupe(&obs.messages, &result.decoded)?;
        ((p * cfg.k_active as f64).round() as usize, p)
    };
    Ok(TrialRecord {
        trial_id,
        users: cfg.k_active,
        user_errors,
        pupe: p,
        false_alarms: false_alarms(&obs.messages, &result.decoded),
        rounds: result.rounds,
        detector_iterations: result.detector_iterations,
        diverged,
        residual_energies: result.residual_energies,
        invariants: result.invariants,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    EbN0Db(Vec<f64>),
    Antennas(Vec<usize>),
    Users(Vec<usize>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::EbN0Db(_) => "eb_n0_db",
            Axis::Antennas(_) => "M",
            Axis::Users(_) => "K",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::EbN0Db(v) => v.len(),
            Axis::Antennas(v) => v.len(),
            Axis::Users(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parse `name` (`eb_n0_db`/`ebn0`, `M`, `K`) and a comma-separated list.
    pub fn parse(name: &str, values: &str) -> Result<Self> {
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let bad = |v: &str| Error::Parse(format!("invalid axis value {v:?}"));
        match name {
            "eb_n0_db" | "ebn0" | "ebn0_db" => {
                Ok(Axis::EbN0Db(items.iter().map(|v| v.parse().map_err(|_| bad(v))).collect::<Result<_>>()?))
            }
            "M" | "m" | "antennas" => {
                Ok(Axis::Antennas(items.iter().map(|v| v.parse().map_err(|_| bad(v))).collect::<Result<_>>()?))
            }
            "K" | "k" | "users" => {
                Ok(Axis::Users(items.iter().map(|v| v.parse().map_err(|_| bad(v))).collect::<Result<_>>()?))
            }
            other => Err(Error::Parse(format!("unknown axis {other:?}"))),
        }
    }

    /// Configuration and axis value at point `i`.
    fn apply(&self, base: &SystemConfig, i: usize) -> (SystemConfig, f64) {
        let mut cfg = base.clone();
        match self {
            Axis::EbN0Db(v) => {
                cfg.sigma2 = sigma2_for_eb_n0_db(base, v[i]);
                (cfg, v[i])
            }
            Axis::Antennas(v) => {
                cfg.antennas = v[i];
                (cfg, v[i] as f64)
            }
            Axis::Users(v) => {
                cfg.k_active = v[i];
                (cfg, v[i] as f64)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub scenario_id: String,
    pub base: SystemConfig,
    pub axis: Axis,
    pub trials: usize,
    pub out: Option<PathBuf>,
    /// Record measured wall time; when off the column is written as 0 so
    /// reruns produce byte-identical files.
    pub record_wall_time: bool,
}

impl SweepSpec {
    pub fn new(scenario_id: impl Into<String>, base: SystemConfig, axis: Axis, trials: usize) -> Self {
        Self { scenario_id: scenario_id.into(), base, axis, trials, out: None, record_wall_time: true }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub scenario_id: String,
    pub axis_name: String,
    pub axis_value: f64,
    pub eb_n0_db: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub n_out: usize,
    pub trials: usize,
    pub pupe_mean: f64,
    pub pupe_ci95: f64,
    pub false_alarm_mean: f64,
    pub rounds_mean: f64,
    pub detector_iters_mean: f64,
    pub diverged_trials: usize,
    pub wall_time_s: f64,
}

impl PointRow {
    pub fn meets(&self, target: f64) -> bool {
        self.pupe_mean <= target
    }
}

pub const CSV_HEADER: &str = "scenario_id,axis_name,axis_value,eb_n0_db,K,M,T,L,Q,n_out,trials,pupe_mean,pupe_ci95,\
false_alarm_mean,rounds_mean,detector_iters_mean,diverged_trials,wall_time_s";

#[derive(Debug, Clone)]
pub struct PointResult {
    pub row: PointRow,
    pub invariants: InvariantMonitor,
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<PointResult>,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<PointRow> {
        self.points.iter().map(|p| p.row.clone()).collect()
    }

    pub fn invariants(&self) -> InvariantMonitor {
        let mut m = InvariantMonitor::default();
        for p in &self.points {
            m.merge(&p.invariants);
        }
        m
    }
}

/// Normal-approximation 95% half-width over `n` per-user error indicators.
pub fn binomial_ci95(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Fold trial records, in trial order, into a CSV row.
pub fn aggregate(
    scenario_id: &str,
    axis_name: &str,
    axis_value: f64,
    cfg: &ValidatedConfig,
    records: &[TrialRecord],
    wall_time_s: f64,
) -> PointRow {
    let n = records.len().max(1) as f64;
    let pupe_mean = records.iter().map(|r| r.pupe).sum::<f64>() / n;
    let users: usize = records.iter().map(|r| r.users).sum();
    PointRow {
        scenario_id: scenario_id.to_string(),
        axis_name: axis_name.to_string(),
        axis_value,
        eb_n0_db: crate::config::eb_n0_db(cfg),
        k: cfg.k_active,
        m: cfg.antennas,
        t: cfg.blocklength,
        l: cfg.sections,
        q: cfg.section_size,
        n_out: cfg.n_out,
        trials: records.len(),
        pupe_mean,
        pupe_ci95: binomial_ci95(pupe_mean, users),
        false_alarm_mean: records.iter().map(|r| r.false_alarms as f64).sum::<f64>() / n,
        rounds_mean: records.iter().map(|r| r.rounds as f64).sum::<f64>() / n,
        detector_iters_mean: records.iter().map(|r| r.detector_iterations as f64).sum::<f64>() / n,
        diverged_trials: records.iter().filter(|r| r.diverged).count(),
        wall_time_s,
    }
}

/// Run `trials` trials of one scenario on the current rayon pool.
pub fn run_point(scenario: &Scenario, trials: usize) -> Result<Vec<TrialRecord>> {
    (0..trials as u64).into_par_iter().map(|t| run_trial(scenario, t)).collect()
}

/// Every axis point in turn, trials spread over `workers` threads (0 uses
/// the rayon default). Results do not depend on the worker count.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<SweepResult> {
    if spec.axis.is_empty() {
        return Err(Error::Parse("sweep axis is empty".into()));
    }
    if spec.trials == 0 {
        return Err(Error::Parse("trials must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parse(format!("worker pool: {e}")))?;
    let mut writer = match &spec.out {
        Some(path) => Some(CsvSink::create(path)?),
        None => None,
    };
    let mut points = Vec::with_capacity(spec.axis.len());
    for i in 0..spec.axis.len() {
        let (cfg, axis_value) = spec.axis.apply(&spec.base, i);
        let scenario = Scenario::build(&cfg)?;
        let start = Instant::now();
        let records = pool.install(|| run_point(&scenario, spec.trials))?;
        let wall = if spec.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
        let row = aggregate(&spec.scenario_id, spec.axis.name(), axis_value, &scenario.config, &records, wall);
        if let Some(w) = writer.as_mut() {
            w.push(&row)?;
        }
        let mut invariants = InvariantMonitor::default();
        for r in &records {
            invariants.merge(&r.invariants);
        }
        points.push(PointResult { row, invariants, records });
    }
    Ok(SweepResult { points })
}

/// CSV writer that flushes after every row.
struct CsvSink {
    inner: csv::Writer<File>,
}

impl CsvSink {
    fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self { inner: csv::Writer::from_writer(File::create(path)?) })
    }

    fn push(&mut self, row: &PointRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_err)?;
        self.inner.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

pub fn write_csv<W: Write>(rows: &[PointRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wr.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    }
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<PointRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header {:?}", header.join(","))));
    }
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

pub fn csv_string(rows: &[PointRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Achieved(f64),
    NotAchieved,
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Achieved(db) => write!(f, "{db} dB"),
            Threshold::NotAchieved => write!(f, "not achieved"),
        }
    }
}

/// Smallest Eb/N0 among `rows` whose mean PUPE is at most `target`.
pub fn threshold_of(rows: &[PointRow], target: f64) -> Threshold {
    rows.iter()
        .filter(|r| r.meets(target))
        .map(|r| r.eb_n0_db)
        .min_by(f64::total_cmp)
        .map_or(Threshold::NotAchieved, Threshold::Achieved)
}

/// Sweep `grid` (ascending) and report the first point meeting `target`.
pub fn find_required_ebn0(
    base: &SystemConfig,
    target_pe: f64,
    grid: &[f64],
    trials: usize,
    workers: usize,
) -> Result<(Threshold, SweepResult)> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Parse("Eb/N0 grid must be sorted ascending".into()));
    }
    let spec = SweepSpec::new("threshold", base.clone(), Axis::EbN0Db(grid.to_vec()), trials);
    let result = run_sweep(&spec, workers)?;
    Ok((threshold_of(&result.rows(), target_pe), result))
}
