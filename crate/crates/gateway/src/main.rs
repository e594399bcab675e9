use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand, ValueEnum};

use peritact::server::{bind, serve_tcp, serve_ws};
use peritact::ServerContext;
use peritact_core::analysis::summary::DEFAULT_SHUFFLES;
use peritact_core::analysis::{ingest_dataset, summarize, DatasetSchema, Factor};
use peritact_core::calibration::{build_calibration, validate_captures, CaptureSet};
use peritact_core::log::{load_record, replay, save_record};
use peritact_core::session::{schedule, TRIALS_PER_PARTICIPANT};
use peritact_core::simagent::run_batch;
use peritact_core::{CalibrationData, Outcome, PlanePoint, RunConfig, TrialPlan};

#[derive(Parser, Debug)]
#[command(name = "peritact", version, about = "Vibrotactile guidance engine: simulate, serve, analyze")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run seeded simulated trials and write one log per trial.
    Simulate {
        #[arg(long, default_value_t = TRIALS_PER_PARTICIPANT)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML with optional [engine] and [agent] tables.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve protocol v1 over newline-delimited TCP (and optionally WebSocket).
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        #[arg(long)]
        ws_bind: Option<String>,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Write one log per finished trial here.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Summarize trial logs or an external dataset.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "layout,approach,metaphor,intensity")]
        group_by: Vec<Factor>,
        /// Dataset schema (TOML); defaults to our own trial logs.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SHUFFLES)]
        shuffles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 21.0)]
        critical_radius: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also write groups.csv, differences.csv, trials.csv and report.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a calibration from landmark captures (`landmark,x,y` CSV).
    Calibrate {
        #[arg(long)]
        captures: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute every frame of a log and compare bit for bit.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Tags an error with a short machine-readable kind.
fn kind<E: std::fmt::Display>(kind: &'static str) -> impl Fn(E) -> anyhow::Error {
    move |e| anyhow!("{kind}: {e}")
}

fn kind_at<'a, E: std::fmt::Display>(kind: &'static str, path: &'a Path) -> impl Fn(E) -> anyhow::Error + 'a {
    move |e| anyhow!("{kind}: {}: {e}", path.display())
}

fn load_calibration(path: Option<&Path>) -> Result<CalibrationData> {
    match path {
        Some(p) => CalibrationData::load(p).map_err(kind_at("calibration", p)),
        None => Ok(CalibrationData::identity(PlanePoint::ORIGIN, 35.0)),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).map_err(kind_at("config", p)),
        None => Ok(RunConfig::default()),
    }
}

fn simulate(trials: usize, seed: u64, params: Option<&Path>, calibration: Option<&Path>, out: &Path) -> Result<()> {
    let config = load_config(params)?;
    let cal = load_calibration(calibration)?;
    let mut plans: Vec<TrialPlan> = Vec::with_capacity(trials);
    let mut participant = 1;
    while plans.len() < trials {
        let need = trials - plans.len();
        plans.extend(schedule(participant, seed, &cal).map_err(kind("schedule"))?.into_iter().take(need));
        participant += 1;
    }
    let records = run_batch(&plans, &cal, &config.agent, &config.engine, seed).map_err(kind("simulate"))?;
    fs::create_dir_all(out).map_err(kind("io"))?;
    for rec in &records {
        let name = format!("p{:03}_t{:02}.jsonl", rec.plan.participant, rec.plan.index);
        save_record(rec, &out.join(name)).map_err(kind("io"))?;
    }
    let reached = records.iter().filter(|r| r.outcome == Outcome::Reached).count();
    println!(
        "simulated trials={} reached={} timeout={} out={}",
        records.len(),
        reached,
        records.len() - reached,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    input: &Path,
    group_by: &[Factor],
    schema: Option<&Path>,
    shuffles: usize,
    seed: u64,
    critical_radius: f64,
    format: Format,
    out: Option<&Path>,
) -> Result<()> {
    let schema = match schema {
        Some(p) => DatasetSchema::load(p).map_err(kind_at("schema", p))?,
        None => DatasetSchema::TrialLog,
    };
    let ingest = ingest_dataset(input, &schema).map_err(kind("ingest"))?;
    for w in &ingest.warnings {
        eprintln!("warning: {}:{}: {}", w.file, w.line, w.message);
    }
    let report = summarize(&ingest.records, group_by, critical_radius, shuffles, seed).map_err(kind("analysis"))?;
    match format {
        Format::Csv => print!("{}\n{}", report.groups_csv(), report.differences_csv()),
        Format::Json => println!("{}", report.to_json()),
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(kind("io"))?;
        let files = [
            ("groups.csv", report.groups_csv()),
            ("differences.csv", report.differences_csv()),
            ("trials.csv", report.trials_csv()),
            ("report.json", report.to_json()),
        ];
        for (name, body) in files {
            fs::write(dir.join(name), body).map_err(kind("io"))?;
        }
    }
    eprintln!(
        "records={} timeouts={} aborted={} excluded_samples={} warnings={}",
        report.trials.len(),
        report.timeouts,
        report.aborted,
        report.excluded_samples,
        ingest.warnings.len()
    );
    Ok(())
}

fn calibrate(captures: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(captures).map_err(kind_at("io", captures))?;
    let set = CaptureSet::parse_csv(&text).map_err(kind_at("calibration", captures))?;
    let cal = build_calibration(&set).map_err(kind("calibration"))?;
    let residuals = validate_captures(&set, &cal);
    cal.save(out).map_err(kind_at("io", out))?;
    let fmt = |r: Option<f64>| r.map_or_else(|| "none".to_string(), |v| format!("{v:.4}"));
    println!(
        "alpha_deg={:.4} beta_deg={:.4} d_top_cm={:.4} d_right_cm={:.4} deg180_residual_cm={} deg270_residual_cm={}",
        cal.alpha.to_degrees(),
        cal.beta.to_degrees(),
        cal.d_top,
        cal.d_right,
        fmt(residuals.deg180_residual),
        fmt(residuals.deg270_residual)
    );
    Ok(())
}

fn replay_log(log: &Path) -> Result<bool> {
    let record = load_record(log).map_err(kind_at("log", log))?;
    let report = replay(&record).map_err(kind("replay"))?;
    if report.is_match() {
        println!("MATCH ticks={}", report.ticks);
    } else {
        let first = report.first_frame_mismatch.map_or_else(|| "none".to_string(), |i| i.to_string());
        println!(
            "MISMATCH ticks={} first_frame={} events_match={} outcome_match={}",
            report.ticks, first, report.events_match, report.outcome_match
        );
    }
    Ok(report.is_match())
}

fn serve(
    addr: &str,
    ws_addr: Option<&str>,
    calibration: Option<&Path>,
    params: Option<&Path>,
    log_dir: Option<PathBuf>,
) -> Result<()> {
    let ctx = Arc::new(ServerContext::new(load_calibration(calibration)?, load_config(params)?, log_dir.clone()));
    if let Some(dir) = &log_dir {
        fs::create_dir_all(dir).map_err(kind("io"))?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(kind("runtime"))?;
    runtime.block_on(async move {
        let tcp = bind(addr).await.map_err(kind("bind"))?;
        let ws = match ws_addr {
            Some(a) => Some(bind(a).await.map_err(kind("bind"))?),
            None => None,
        };
        let tcp_addr = tcp.local_addr().map_err(kind("bind"))?;
        let ws_label = match &ws {
            Some(l) => l.local_addr().map_err(kind("bind"))?.to_string(),
            None => "none".to_string(),
        };
        println!("listening tcp={tcp_addr} ws={ws_label}");
        let tcp_task = tokio::spawn(serve_tcp(tcp, Arc::clone(&ctx)));
        let ws_task = ws.map(|l| tokio::spawn(serve_ws(l, Arc::clone(&ctx))));
        tokio::select! {
            r = tcp_task => r.map_err(kind("serve"))?.map_err(kind("serve")),
            r = async { match ws_task { Some(t) => t.await, None => std::future::pending().await } } => {
                r.map_err(kind("serve"))?.map_err(kind("serve"))
            }
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { trials, seed, params, calibration, out } => {
            simulate(trials, seed, params.as_deref(), calibration.as_deref(), &out)?;
        }
        Command::Serve { bind, ws_bind, calibration, params, log_dir } => {
            serve(&bind, ws_bind.as_deref(), calibration.as_deref(), params.as_deref(), log_dir)?;
        }
        Command::Analyze { input, group_by, schema, shuffles, seed, critical_radius, format, out } => {
            analyze(&input, &group_by, schema.as_deref(), shuffles, seed, critical_radius, format, out.as_deref())?;
        }
        Command::Calibrate { captures, out } => calibrate(&captures, &out)?,
        Command::Replay { log } => return replay_log(&log),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let reason = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {reason}");
            ExitCode::from(2)
        }
    }
}
