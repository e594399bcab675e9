//! Line-delimited trial logs and deterministic replay.
//!
//! One trial per file. Every line is a JSON object tagged by `kind`:
//!
//! ```text
//! {"kind":"header","format":"peritact-trial","version":1,"plan":{..},"center":{..},"engine":{..}}
//! {"kind":"tick","sample":{"t":..,"hand":{..},"wrist":{..},"valid":true},"frame":{"t":..,"intensity":[a,b,c,d]}}
//! {"kind":"event","event":{"kind":"trial_start","t":..}}
//! ...
//! {"kind":"result","outcome":"reached","completion_time":1.9}
//! ```
//!
//! Event lines follow the tick that produced them. Floats are written in
//! shortest round-trip form, so a log read back reproduces the record
//! bit-for-bit. Ingested recordings have `"frame":null` on every tick.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EngineConfig;
use crate::feedback::VibrationFrame;
use crate::geometry::PlanePoint;
use crate::session::{Outcome, PoseSample, Provenance, Session, SessionError, SessionEvent, TrialPlan, TrialRecord};

pub const LOG_FORMAT: &str = "peritact-trial";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("log is empty")]
    Empty,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LogLine {
    Header {
        format: String,
        version: u32,
        plan: TrialPlan,
        center: PlanePoint,
        engine: EngineConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        provenance: Option<Provenance>,
    },
    Tick {
        sample: PoseSample,
        frame: Option<VibrationFrame>,
    },
    Event {
        event: SessionEvent,
    },
    Result {
        outcome: Outcome,
        completion_time: Option<f64>,
    },
}

fn to_line(line: &LogLine) -> String {
    serde_json::to_string(line).expect("log lines always serialize")
}

/// Serializes a record. Each event line follows the first tick at or after
/// its timestamp; events later than the last tick (an abort) trail.
pub fn write_record<W: Write>(record: &TrialRecord, mut out: W) -> io::Result<()> {
    let header = LogLine::Header {
        format: LOG_FORMAT.to_string(),
        version: LOG_VERSION,
        plan: record.plan,
        center: record.center,
        engine: record.engine,
        provenance: record.provenance.clone(),
    };
    writeln!(out, "{}", to_line(&header))?;

    let mut events = record.events.iter().peekable();
    for (i, sample) in record.samples.iter().enumerate() {
        let frame = record.frames.get(i).copied();
        writeln!(out, "{}", to_line(&LogLine::Tick { sample: *sample, frame }))?;
        while let Some(ev) = events.next_if(|ev| ev.t <= sample.t) {
            writeln!(out, "{}", to_line(&LogLine::Event { event: *ev }))?;
        }
    }
    for ev in events {
        writeln!(out, "{}", to_line(&LogLine::Event { event: *ev }))?;
    }
    let result = LogLine::Result { outcome: record.outcome, completion_time: record.completion_time };
    writeln!(out, "{}", to_line(&result))?;
    Ok(())
}

pub fn record_to_string(record: &TrialRecord) -> String {
    let mut buf = Vec::new();
    write_record(record, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn save_record(record: &TrialRecord, path: &Path) -> Result<(), LogError> {
    let file = fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    write_record(record, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_record<R: BufRead>(input: R) -> Result<TrialRecord, LogError> {
    let mut record: Option<TrialRecord> = None;
    let mut finished = false;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| LogError::Malformed { line: lineno, message };
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if finished {
            return Err(malformed("content after result line".into()));
        }
        match (parsed, record.as_mut()) {
            (LogLine::Header { format, version, plan, center, engine, provenance }, None) => {
                if format != LOG_FORMAT || version != LOG_VERSION {
                    return Err(malformed(format!("unsupported log {format} v{version}")));
                }
                record = Some(TrialRecord {
                    plan,
                    center,
                    engine,
                    samples: Vec::new(),
                    frames: Vec::new(),
                    events: Vec::new(),
                    outcome: Outcome::Aborted,
                    completion_time: None,
                    provenance,
                });
            }
            (LogLine::Header { .. }, Some(_)) => return Err(malformed("duplicate header".into())),
            (_, None) => return Err(malformed("missing header".into())),
            (LogLine::Tick { sample, frame }, Some(rec)) => {
                rec.samples.push(sample);
                if let Some(f) = frame {
                    rec.frames.push(f);
                }
            }
            (LogLine::Event { event }, Some(rec)) => rec.events.push(event),
            (LogLine::Result { outcome, completion_time }, Some(rec)) => {
                rec.outcome = outcome;
                rec.completion_time = completion_time;
                finished = true;
            }
        }
    }
    match (record, finished) {
        (None, _) => Err(LogError::Empty),
        (Some(_), false) => Err(LogError::Malformed { line: 0, message: "missing result line".into() }),
        (Some(rec), true) => Ok(rec),
    }
}

pub fn load_record(path: &Path) -> Result<TrialRecord, LogError> {
    read_record(io::BufReader::new(fs::File::open(path)?))
}

/// Result of re-running a record's samples through a fresh session.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub ticks: usize,
    /// Index of the first tick whose frame differs, if any.
    pub first_frame_mismatch: Option<usize>,
    pub events_match: bool,
    pub outcome_match: bool,
}

impl ReplayReport {
    pub fn is_match(&self) -> bool {
        self.first_frame_mismatch.is_none() && self.events_match && self.outcome_match
    }
}

/// Recomputes every frame from the recorded samples and compares bitwise.
pub fn replay(record: &TrialRecord) -> Result<ReplayReport, SessionError> {
    let mut session = Session::new(record.plan, record.center, record.engine);
    let mut first_frame_mismatch = None;
    for (i, sample) in record.samples.iter().enumerate() {
        let out = session.step(*sample)?;
        let same = record.frames.get(i).is_some_and(|f| f.bit_eq(&out.frame));
        if !same && first_frame_mismatch.is_none() {
            first_frame_mismatch = Some(i);
        }
    }
    if record.frames.len() != record.samples.len() && first_frame_mismatch.is_none() {
        first_frame_mismatch = Some(record.frames.len().min(record.samples.len()));
    }
    if record.outcome == Outcome::Aborted && !session.is_finished() {
        let t = record.events.last().map_or(0.0, |e| e.t);
        session.abort(t)?;
    }
    let events = session.events().to_vec();
    let events_match = events.len() == record.events.len()
        && events.iter().zip(&record.events).all(|(a, b)| a.kind == b.kind && a.t.to_bits() == b.t.to_bits());
    let outcome_match = match session.finalize() {
        Ok(rec) => {
            rec.outcome == record.outcome
                && rec.completion_time.map(f64::to_bits) == record.completion_time.map(f64::to_bits)
        }
        Err(_) => false,
    };
    Ok(ReplayReport { ticks: record.samples.len(), first_frame_mismatch, events_match, outcome_match })
}
