//! Loading recorded trajectories: our own trial logs or delimited text files
//! described by a schema file.
//!
//! A delimited schema names the time and hand columns (wrist optional), the
//! delimiter, unit scales, and where per-file metadata comes from: a regex
//! with named groups applied to the file name, falling back to `[defaults]`.
//!
//! ```toml
//! format = "delimited"
//! delimiter = "whitespace"
//! extension = "txt"
//! position_scale = 100.0      # meters -> cm
//! filename_pattern = '^P(?P<participant>\d+)_T(?P<trial>\d+)_(?P<layout>[a-z]+)_(?P<approach>[a-z_]+?)_(?P<metaphor>pull|push)_(?P<intensity>linear|zone)_(?P<target_angle>[0-9.]+)$'
//!
//! [columns]
//! t = 0
//! hand_x = 1
//! hand_y = 2
//! ```
//!
//! Malformed lines after the first data line are skipped and reported. A
//! first data line that does not fit the schema rejects the whole file.

use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::calibration::{CalibrationData, TargetSpec};
use crate::config::EngineConfig;
use crate::feedback::{Approach, Condition, IntensityMode, Layout, Metaphor};
use crate::geometry::PlanePoint;
use crate::log::{load_record, LogError};
use crate::session::{EventKind, Outcome, PoseSample, Provenance, SessionEvent, TrialPlan, TrialRecord};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum DatasetSchema {
    /// Files written by the session logger (`*.jsonl`).
    #[default]
    TrialLog,
    Delimited(DelimitedSchema),
}

impl DatasetSchema {
    pub fn from_toml(text: &str) -> Result<Self, AnalysisError> {
        let schema: DatasetSchema = toml::from_str(text).map_err(|e| AnalysisError::SchemaConfig(e.to_string()))?;
        if let DatasetSchema::Delimited(d) = &schema {
            d.compile_pattern()?;
        }
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text = fs::read_to_string(path).map_err(|e| AnalysisError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    fn extension(&self) -> Option<&str> {
        match self {
            DatasetSchema::TrialLog => Some("jsonl"),
            DatasetSchema::Delimited(d) => d.extension.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Columns {
    pub t: usize,
    pub hand_x: usize,
    pub hand_y: usize,
    #[serde(default)]
    pub wrist_x: Option<usize>,
    #[serde(default)]
    pub wrist_y: Option<usize>,
}

impl Columns {
    fn required(&self) -> usize {
        [Some(self.t), Some(self.hand_x), Some(self.hand_y), self.wrist_x, self.wrist_y]
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(0)
            + 1
    }
}

/// Per-file facts that are not in the sample rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Metadata {
    pub participant: Option<u32>,
    pub trial: Option<u32>,
    pub layout: Option<String>,
    pub approach: Option<String>,
    pub metaphor: Option<String>,
    pub intensity: Option<String>,
    pub target_angle: Option<f64>,
    pub target_x: Option<f64>,
    pub target_y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelimitedSchema {
    /// `"whitespace"` or a literal separator such as `","`.
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default)]
    pub skip_lines: usize,
    #[serde(default = "default_comment")]
    pub comment_prefix: Option<String>,
    #[serde(default = "default_extension")]
    pub extension: Option<String>,
    pub columns: Columns,
    #[serde(default = "one")]
    pub time_scale: f64,
    #[serde(default = "one")]
    pub position_scale: f64,
    #[serde(default)]
    pub filename_pattern: Option<String>,
    #[serde(default)]
    pub defaults: Metadata,
    /// Board center and circle radius used to place `target_angle` targets.
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_attain")]
    pub attain_radius: f64,
}

fn default_delimiter() -> String {
    "whitespace".to_string()
}
fn default_comment() -> Option<String> {
    Some("#".to_string())
}
fn default_extension() -> Option<String> {
    Some("txt".to_string())
}
fn one() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    35.0
}
fn default_attain() -> f64 {
    3.5
}

impl DelimitedSchema {
    pub fn new(columns: Columns) -> Self {
        Self {
            delimiter: default_delimiter(),
            skip_lines: 0,
            comment_prefix: default_comment(),
            extension: default_extension(),
            columns,
            time_scale: 1.0,
            position_scale: 1.0,
            filename_pattern: None,
            defaults: Metadata::default(),
            center: [0.0, 0.0],
            radius: default_radius(),
            attain_radius: default_attain(),
        }
    }

    fn compile_pattern(&self) -> Result<Option<Regex>, AnalysisError> {
        self.filename_pattern
            .as_deref()
            .map(|p| Regex::new(p).map_err(|e| AnalysisError::SchemaConfig(format!("filename_pattern: {e}"))))
            .transpose()
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        if self.delimiter == "whitespace" {
            line.split_whitespace().collect()
        } else {
            line.split(self.delimiter.as_str()).map(str::trim).collect()
        }
    }
}

/// A line skipped during ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub file: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub records: Vec<TrialRecord>,
    pub warnings: Vec<ParseWarning>,
}

fn list_files(path: &Path, extension: Option<&str>) -> Result<Vec<PathBuf>, AnalysisError> {
    let io_err = |e| AnalysisError::Io(path.display().to_string(), e);
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| extension.is_none_or(|ext| p.extension().is_some_and(|e| e == ext)))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every matching file under `path` (or `path` itself if it is a file).
pub fn ingest_dataset(path: &Path, schema: &DatasetSchema) -> Result<IngestReport, AnalysisError> {
    let files = list_files(path, schema.extension())?;
    let mut report = IngestReport { records: Vec::new(), warnings: Vec::new() };
    for file in files {
        match schema {
            DatasetSchema::TrialLog => {
                let record = load_record(&file).map_err(|e| match e {
                    LogError::Empty => AnalysisError::EmptyFile(file.display().to_string()),
                    LogError::Malformed { line, message } => {
                        AnalysisError::SchemaMismatch { file: file.display().to_string(), line, message }
                    }
                    LogError::Io(e) => AnalysisError::Io(file.display().to_string(), e),
                })?;
                report.records.push(record);
            }
            DatasetSchema::Delimited(d) => {
                let text = fs::read_to_string(&file).map_err(|e| AnalysisError::Io(file.display().to_string(), e))?;
                let (record, warnings) = parse_delimited(&file, &text, d)?;
                report.records.push(record);
                report.warnings.extend(warnings);
            }
        }
    }
    Ok(report)
}

fn metadata_for(file: &Path, schema: &DelimitedSchema) -> Result<Metadata, AnalysisError> {
    let mut meta = schema.defaults.clone();
    let Some(re) = schema.compile_pattern()? else {
        return Ok(meta);
    };
    let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let mismatch =
        |message: String| AnalysisError::SchemaMismatch { file: file.display().to_string(), line: 0, message };
    let caps =
        re.captures(stem).ok_or_else(|| mismatch(format!("file name `{stem}` does not match filename_pattern")))?;
    let text = |name: &str| caps.name(name).map(|m| m.as_str().to_string());
    let num = |name: &str| -> Result<Option<f64>, AnalysisError> {
        text(name)
            .map(|s| s.parse::<f64>().map_err(|_| mismatch(format!("`{name}` = `{s}` is not a number"))))
            .transpose()
    };
    let int = |name: &str| -> Result<Option<u32>, AnalysisError> {
        text(name)
            .map(|s| s.parse::<u32>().map_err(|_| mismatch(format!("`{name}` = `{s}` is not an integer"))))
            .transpose()
    };
    meta.participant = int("participant")?.or(meta.participant);
    meta.trial = int("trial")?.or(meta.trial);
    meta.layout = text("layout").or(meta.layout);
    meta.approach = text("approach").or(meta.approach);
    meta.metaphor = text("metaphor").or(meta.metaphor);
    meta.intensity = text("intensity").or(meta.intensity);
    meta.target_angle = num("target_angle")?.or(meta.target_angle);
    meta.target_x = num("target_x")?.or(meta.target_x);
    meta.target_y = num("target_y")?.or(meta.target_y);
    Ok(meta)
}

fn parse_level<T: std::str::FromStr<Err = String>>(
    file: &Path,
    name: &str,
    value: &Option<String>,
) -> Result<T, AnalysisError> {
    let mismatch =
        |message: String| AnalysisError::SchemaMismatch { file: file.display().to_string(), line: 0, message };
    value.as_deref().ok_or_else(|| mismatch(format!("metadata `{name}` missing")))?.parse::<T>().map_err(mismatch)
}

fn parse_delimited(
    file: &Path,
    text: &str,
    schema: &DelimitedSchema,
) -> Result<(TrialRecord, Vec<ParseWarning>), AnalysisError> {
    let fname = file.display().to_string();
    let meta = metadata_for(file, schema)?;
    let condition = Condition::new(
        parse_level::<Layout>(file, "layout", &meta.layout)?,
        parse_level::<Approach>(file, "approach", &meta.approach)?,
        parse_level::<Metaphor>(file, "metaphor", &meta.metaphor)?,
        parse_level::<IntensityMode>(file, "intensity", &meta.intensity)?,
    );
    let center = PlanePoint::new(schema.center[0], schema.center[1]);
    let circle = CalibrationData::identity(center, schema.radius);
    let (position, angle) = match (meta.target_x, meta.target_y, meta.target_angle) {
        (Some(x), Some(y), angle) => (PlanePoint::new(x, y), angle.unwrap_or(f64::NAN)),
        (_, _, Some(angle)) => (circle.ellipse_point(angle.to_radians()), angle),
        _ => {
            return Err(AnalysisError::SchemaMismatch {
                file: fname,
                line: 0,
                message: "metadata needs target_angle or target_x/target_y".into(),
            })
        }
    };
    let target = TargetSpec {
        nominal_angle_deg: angle,
        corrected_angle_deg: angle,
        position,
        attain_radius: schema.attain_radius,
    };

    let cols = &schema.columns;
    let needed = cols.required();
    let mut samples: Vec<PoseSample> = Vec::new();
    let mut warnings = Vec::new();
    let (mut first_line, mut last_line) = (0, 0);

    for (i, raw) in text.lines().enumerate().skip(schema.skip_lines) {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || schema.comment_prefix.as_deref().is_some_and(|c| line.starts_with(c)) {
            continue;
        }
        let parsed = parse_row(line, schema, needed).and_then(|s| match samples.last() {
            Some(prev) if s.t <= prev.t => Err(format!("time {} does not increase (previous {})", s.t, prev.t)),
            _ => Ok(s),
        });
        match parsed {
            Ok(sample) => {
                if samples.is_empty() {
                    first_line = lineno;
                }
                last_line = lineno;
                samples.push(sample);
            }
            Err(message) if samples.is_empty() => {
                return Err(AnalysisError::SchemaMismatch { file: fname, line: lineno, message });
            }
            Err(message) => warnings.push(ParseWarning { file: fname.clone(), line: lineno, message }),
        }
    }
    if samples.is_empty() {
        return Err(AnalysisError::EmptyFile(fname));
    }

    let t0 = samples[0].t;
    let mut events = vec![SessionEvent { kind: EventKind::TrialStart, t: t0 }];
    let reached = samples.iter().find(|s| s.hand.distance(position) <= schema.attain_radius);
    let (outcome, completion_time) = match reached {
        Some(s) => {
            events.push(SessionEvent { kind: EventKind::TargetReached, t: s.t });
            (Outcome::Reached, Some(s.t - t0))
        }
        None => {
            events.push(SessionEvent { kind: EventKind::Aborted, t: samples[samples.len() - 1].t });
            (Outcome::Aborted, None)
        }
    };
    let engine = EngineConfig { attain_radius: schema.attain_radius, ..EngineConfig::default() };
    let record = TrialRecord {
        plan: TrialPlan {
            participant: meta.participant.unwrap_or(0),
            index: meta.trial.unwrap_or(0),
            condition,
            target,
            repetition: 0,
        },
        center,
        engine,
        samples,
        frames: Vec::new(),
        events,
        outcome,
        completion_time,
        provenance: Some(Provenance { file: fname, first_line, last_line }),
    };
    Ok((record, warnings))
}

fn parse_row(line: &str, schema: &DelimitedSchema, needed: usize) -> Result<PoseSample, String> {
    let fields = schema.split(line);
    if fields.len() < needed {
        return Err(format!("expected at least {needed} columns, found {}", fields.len()));
    }
    let num = |idx: usize, name: &str| -> Result<f64, String> {
        let v: f64 =
            fields[idx].parse().map_err(|_| format!("column {idx} ({name}) `{}` is not a number", fields[idx]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("column {idx} ({name}) is not finite"))
        }
    };
    let cols = &schema.columns;
    let t = num(cols.t, "t")? * schema.time_scale;
    let hand = PlanePoint::new(num(cols.hand_x, "hand_x")?, num(cols.hand_y, "hand_y")?) * schema.position_scale;
    let wrist = match (cols.wrist_x, cols.wrist_y) {
        (Some(wx), Some(wy)) => PlanePoint::new(num(wx, "wrist_x")?, num(wy, "wrist_y")?) * schema.position_scale,
        _ => hand - PlanePoint::new(0.0, 10.0),
    };
    Ok(PoseSample::new(t, hand, wrist))
}
