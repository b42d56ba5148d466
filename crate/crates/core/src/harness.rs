//! Offline scenario runner, config loading and log persistence.
//!
//! A scenario drives a [`Session`] from a scripted stylus: the script is
//! held at its first sample until engagement completes, then played from
//! its start for `duration` seconds of engaged control.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{LogRecord, Session, SessionConfig, TickOutcome};
use crate::sim::LeaderScript;
use crate::stats::{BinStats, ScenarioComparison};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("engagement timed out after {0:.3} s")]
    EngagementTimedOut(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Log { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
}

/// A config that failed to parse or validate, with the JSON path at fault.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}{message}", if path.is_empty() || path == "." { String::new() } else { format!("{path}: ") })]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Splits a `"a.b: message"` validation string into path and message.
    fn from_validation(prefix: &str, msg: String) -> Self {
        match msg.split_once(": ") {
            Some((p, m)) if !p.contains(' ') => Self::new(format!("{prefix}{p}"), m),
            _ => Self::new(prefix.trim_end_matches('.'), msg),
        }
    }
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::new(path, inner.to_string())
    })
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    /// Force limitation off.
    A,
    /// Force limitation on.
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub scenario: ScenarioId,
    /// Engaged control time to record (s).
    pub duration: f64,
    /// Seeds the world noise and, through [`tremor_seed`], the tremor.
    pub seed: u64,
    #[serde(default)]
    pub session: SessionConfig,
    pub script: LeaderScript,
}

fn default_name() -> String {
    "scenario".into()
}

/// Tremor seed derived from a scenario seed so the two noise streams differ.
pub fn tremor_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(ConfigError::new("duration", "must be positive"));
        }
        if self.scenario == ScenarioId::B && !(self.session.interaction.safety.force_scaling_gain > 0.0) {
            return Err(ConfigError::new(
                "session.interaction.safety.force_scaling_gain",
                "scenario B needs a positive gain",
            ));
        }
        self.session
            .validate()
            .map_err(|m| ConfigError::from_validation("session.", m))?;
        self.script
            .validate()
            .map_err(|m| ConfigError::from_validation("script.", m))
    }

    /// Session config with the scenario's limiter setting and seed applied.
    pub fn resolved_session(&self) -> SessionConfig {
        let mut s = self.session.clone();
        if self.scenario == ScenarioId::A {
            s.interaction.safety.force_scaling_gain = 0.0;
        }
        s.world.seed = self.seed;
        s
    }

    pub fn resolved_script(&self) -> LeaderScript {
        let mut s = self.script.clone();
        s.tremor.seed = tremor_seed(self.seed);
        s
    }

    /// Number of engaged records a run produces.
    pub fn record_count(&self) -> usize {
        (self.duration / self.session.period - 1e-9).ceil() as usize
    }
}

/// Runs engagement and then `duration` seconds of control.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<LogRecord>, HarnessError> {
    cfg.validate()?;
    let script = cfg.resolved_script();
    let mut session = Session::new(cfg.resolved_session());
    let period = session.config().period;
    let start = script.sample(0.0);
    loop {
        match session.tick(Some(&start)) {
            TickOutcome::Engaged(_) => break,
            TickOutcome::TimedOut => return Err(HarnessError::EngagementTimedOut(session.time())),
            _ => {}
        }
    }
    let n = cfg.record_count();
    let mut log = Vec::with_capacity(n);
    for k in 1..=n {
        let stylus = script.sample(k as f64 * period);
        match session.tick(Some(&stylus)) {
            TickOutcome::Control(r) => log.push(r),
            other => unreachable!("engaged session produced {other:?}"),
        }
    }
    Ok(log)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes one JSON record per line.
pub fn write_log(path: &Path, records: &[LogRecord]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("log records always serialize");
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, HarnessError> {
    let r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| HarnessError::Log {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Log files at `path`: the file itself, or every `*.jsonl` in the
/// directory in name order.
pub fn log_files(path: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if !path.is_dir() {
        return Ok(vec![path.to_owned()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(io_err(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// All records under `path` (see [`log_files`]), concatenated.
pub fn read_logs(path: &Path) -> Result<Vec<LogRecord>, HarnessError> {
    let mut out = Vec::new();
    for f in log_files(path)? {
        out.extend(read_log(&f)?);
    }
    Ok(out)
}

/// The `(a, b)` pairs the binned statistics condition on.
pub fn samples(records: &[LogRecord]) -> impl Iterator<Item = (f64, f64)> + '_ {
    records.iter().map(|r| (r.a, r.b))
}

#[derive(Debug, Serialize)]
struct BinRow {
    center: f64,
    count_a: usize,
    mean_a: Option<f64>,
    variance_a: Option<f64>,
    count_b: usize,
    mean_b: Option<f64>,
    variance_b: Option<f64>,
    compared: bool,
}

/// Per-bin table of both scenarios as CSV. Empty cells mark undefined
/// moments.
pub fn write_bins_csv<W: Write>(
    out: W,
    a: &BinStats,
    b: &BinStats,
    comparison: &ScenarioComparison,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for (x, y) in a.bins.iter().zip(&b.bins) {
        w.serialize(BinRow {
            center: x.center,
            count_a: x.count,
            mean_a: x.mean,
            variance_a: x.variance,
            count_b: y.count,
            mean_b: y.mean,
            variance_b: y.variance,
            compared: comparison.bins.iter().any(|c| c.center == x.center),
        })?;
    }
    w.flush()?;
    Ok(())
}
