//! `teleop`: scenario runs, statistics, the eye-hand assessment and the live
//! service.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 failed assertion.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use teleop_core::harness::{
    load_config, read_logs, run_scenario, write_bins_csv, write_log, HarnessError, ScenarioConfig, ScenarioId,
};
use teleop_core::scenarios::{
    compare_logs, dental_campaign, dental_trial, direction_failures, run_eyehand_assessment, EyehandConfig,
};
use teleop_core::stats::BinSpec;
use teleop_service::{Server, ServiceConfig};

#[derive(Parser)]
#[command(name = "teleop", version, about = "Haptic teleoperation simulator and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its JSON Lines log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the dental-model campaign for both scenarios.
    Campaign {
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two logs (files or directories of *.jsonl) by binned
    /// conditional force statistics.
    Stats {
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        logs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        bmin: f64,
        #[arg(long, default_value_t = 0.007)]
        bmax: f64,
        #[arg(long, default_value_t = 0.0001)]
        bstep: f64,
        /// Write report.json and bins.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 3 unless B shows lower forces than A.
        #[arg(long)]
        check: bool,
    },
    /// Run the eye-hand coordination assessment.
    Eyehand {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve a live session over WebSocket.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Write log.jsonl and inputs.jsonl here when the session ends.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Stop after this many control ticks instead of waiting for Ctrl-C.
        #[arg(long)]
        ticks: Option<u64>,
    },
    /// Print a default configuration.
    GenConfig {
        kind: ConfigKind,
        #[arg(long, value_enum, default_value_t = Scenario::B)]
        scenario: Scenario,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Scenario,
    Eyehand,
    Service,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    A,
    B,
}

impl From<Scenario> for ScenarioId {
    fn from(s: Scenario) -> Self {
        match s {
            Scenario::A => ScenarioId::A,
            Scenario::B => ScenarioId::B,
        }
    }
}

enum Failure {
    Config(String),
    Assertion(Vec<String>),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Assertion(list)) => {
            for m in list {
                eprintln!("assertion failed: {m}");
            }
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, out } => run(&config, &out),
        Command::Campaign { out } => campaign(&out),
        Command::Stats {
            logs,
            bmin,
            bmax,
            bstep,
            out,
            check,
        } => stats(&logs[0], &logs[1], BinSpec { b_min: bmin, b_max: bmax, b_step: bstep }, out.as_deref(), check),
        Command::Eyehand { config } => eyehand(config.as_deref()),
        Command::Serve {
            config,
            port,
            host,
            record,
            ticks,
        } => serve(config.as_deref(), &host, port, record.as_deref(), ticks),
        Command::GenConfig { kind, scenario } => {
            let text = match kind {
                ConfigKind::Scenario => pretty(&dental_trial(scenario.into(), 0, 0)),
                ConfigKind::Eyehand => pretty(&EyehandConfig::default()),
                ConfigKind::Service => pretty(&ServiceConfig::default()),
            };
            println!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("configs serialize")
}

fn config_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    load_config(path).map_err(|e| match e {
        HarnessError::Config(c) => Failure::Config(format!("{}: {c}", path.display())),
        other => Failure::Config(other.to_string()),
    })
}

fn run(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg: ScenarioConfig = config_file(config)?;
    cfg.validate()
        .map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
    let log = run_scenario(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(format!("{}.jsonl", cfg.name));
    write_log(&path, &log)?;
    println!("{} records -> {}", log.len(), path.display());
    Ok(())
}

fn campaign(out: &Path) -> Result<(), Failure> {
    for id in [ScenarioId::A, ScenarioId::B] {
        let dir = out.join(format!("{id:?}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for cfg in dental_campaign(id) {
            fs::write(dir.join(format!("{}.json", cfg.name)), pretty(&cfg)).context("writing config")?;
            let log = run_scenario(&cfg)?;
            write_log(&dir.join(format!("{}.jsonl", cfg.name)), &log)?;
        }
        println!("scenario {id:?} -> {}", dir.display());
    }
    Ok(())
}

fn stats(a: &Path, b: &Path, spec: BinSpec, out: Option<&Path>, check: bool) -> Result<(), Failure> {
    spec.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let (la, lb) = (read_logs(a)?, read_logs(b)?);
    let report = compare_logs(&la, &lb, &spec).map_err(|e| Failure::Other(e.into()))?;
    let json = pretty(&report);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("report.json"), &json).context("writing report.json")?;
        let csv = fs::File::create(dir.join("bins.csv")).context("creating bins.csv")?;
        write_bins_csv(csv, &report.bins_a, &report.bins_b, &report.comparison).context("writing bins.csv")?;
    }
    let c = &report.comparison;
    println!(
        "{} bins compared; B <= A in all: {}; Welch t = {:.4} (dof {:.1}, p = {:.3e}); Cohen's d = {:.4} [{:.4}, {:.4}]; Levene W = {:.4} (p = {:.3e})",
        c.bins.len(),
        c.dominance,
        c.welch.t,
        c.welch.dof,
        c.welch.p,
        c.cohens_d.d,
        c.cohens_d.ci95[0],
        c.cohens_d.ci95[1],
        c.levene.w,
        c.levene.p
    );
    if out.is_none() {
        println!("{json}");
    }
    if check {
        let failures = direction_failures(c);
        if !failures.is_empty() {
            return Err(Failure::Assertion(failures));
        }
    }
    Ok(())
}

fn eyehand(config: Option<&Path>) -> Result<(), Failure> {
    let cfg: EyehandConfig = match config {
        Some(p) => config_file(p)?,
        None => EyehandConfig::default(),
    };
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let report = run_eyehand_assessment(&cfg)?;
    println!("{}", pretty(&report));
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Assertion(report.failures))
    }
}

fn serve(config: Option<&Path>, host: &str, port: u16, record: Option<&Path>, ticks: Option<u64>) -> Result<(), Failure> {
    let cfg: ServiceConfig = match config {
        Some(p) => config_file(p)?,
        None => ServiceConfig::default(),
    };
    cfg.validate().map_err(Failure::Config)?;
    let addr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Failure::Config(format!("bad listen address: {e}")))?;
    let server = Server::start(cfg, addr, ticks).context("starting server")?;
    println!("listening on ws://{}", server.local_addr());
    if ticks.is_none() {
        let status = server.status();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .expect("signal runtime");
            if rt.block_on(tokio::signal::ctrl_c()).is_ok() {
                status.stop.store(true, Ordering::Release);
            }
        });
    }
    let report = server.wait();
    println!(
        "{} ticks, {} engaged records, {} frames dropped, {} overruns{}",
        report.ticks,
        report.log.len(),
        report.dropped_frames,
        report.overruns,
        if report.degraded { ", degraded" } else { "" }
    );
    if let Some(dir) = record {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_log(&dir.join("log.jsonl"), &report.log)?;
        let mut inputs = String::new();
        for i in &report.inputs {
            inputs.push_str(&serde_json::to_string(i).expect("inputs serialize"));
            inputs.push('\n');
        }
        fs::write(dir.join("inputs.jsonl"), inputs).context("writing inputs.jsonl")?;
    }
    Ok(())
}
