//! Protocol v1: one JSON object per line, each carrying `type` and `version`.
//!
//! Client to server: `hello`, `configure`, `pose`.
//! Server to client: `hello`, `frame`, `event`, `trial_state`, `error`.
//! The field-by-field schema lives in `docs/protocol.md`.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use peritact_core::session::EventKind;
use peritact_core::{AgentParams, Condition, Outcome, VibrationFrame};

pub const PROTOCOL_VERSION: u32 = 1;

/// Longest accepted line in bytes, newline excluded.
pub const MAX_LINE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not a JSON object, or `type`/`version` missing or mistyped.
    Malformed,
    UnknownType,
    UnsupportedVersion,
    /// Known type with missing or ill-typed fields.
    InvalidPayload,
    /// Out-of-order message; the connection is closed.
    ProtocolViolation,
    NotConfigured,
    TrialInProgress,
    /// Pose rejected by the session (time went backwards, non-finite time).
    InvalidPose,
    LineTooLong,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Malformed => "malformed",
            ErrorCode::UnknownType => "unknown_type",
            ErrorCode::UnsupportedVersion => "unsupported_version",
            ErrorCode::InvalidPayload => "invalid_payload",
            ErrorCode::ProtocolViolation => "protocol_violation",
            ErrorCode::NotConfigured => "not_configured",
            ErrorCode::TrialInProgress => "trial_in_progress",
            ErrorCode::InvalidPose => "invalid_pose",
            ErrorCode::LineTooLong => "line_too_long",
            ErrorCode::Internal => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}: {message}", code.as_str())]
pub struct WireError {
    pub code: ErrorCode,
    pub message: String,
}

impl WireError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The server drives its own simulated hand and streams the whole trial.
    Simulated,
    /// The client streams tracker poses.
    ExternalPose,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Hello {
    #[serde(default)]
    pub client: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configure {
    pub condition: Condition,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub participant: Option<u32>,
    #[serde(default)]
    pub trial: Option<u32>,
    /// Nominal target angle in degrees; drawn from the seed when absent.
    #[serde(default)]
    pub target_angle_deg: Option<f64>,
    /// Overrides the server's agent parameters in simulated mode.
    #[serde(default)]
    pub agent: Option<AgentParams>,
}

fn default_mode() -> Mode {
    Mode::ExternalPose
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub t: f64,
    pub hand: [f64; 2],
    pub wrist: [f64; 2],
    #[serde(default = "yes")]
    pub valid: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Hello(Hello),
    Configure(Box<Configure>),
    Pose(Pose),
}

/// Parses one line from a client.
pub fn decode_client(line: &str) -> Result<ClientMessage, WireError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| WireError::new(ErrorCode::Malformed, format!("not JSON: {e}")))?;
    let Value::Object(mut map) = value else {
        return Err(WireError::new(ErrorCode::Malformed, "message must be a JSON object"));
    };
    let kind = match map.remove("type") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(WireError::new(ErrorCode::Malformed, "`type` must be a string")),
        None => return Err(WireError::new(ErrorCode::Malformed, "missing `type`")),
    };
    let version = match map.remove("version") {
        Some(v) => v.as_u64().ok_or_else(|| WireError::new(ErrorCode::Malformed, "`version` must be an integer"))?,
        None => return Err(WireError::new(ErrorCode::Malformed, "missing `version`")),
    };
    if version != u64::from(PROTOCOL_VERSION) {
        return Err(WireError::new(
            ErrorCode::UnsupportedVersion,
            format!("protocol version {version} not supported (server speaks {PROTOCOL_VERSION})"),
        ));
    }
    let payload = Value::Object(map);
    let invalid = |e: serde_json::Error| WireError::new(ErrorCode::InvalidPayload, format!("{kind}: {e}"));
    match kind.as_str() {
        "hello" => Ok(ClientMessage::Hello(serde_json::from_value(payload).map_err(invalid)?)),
        "configure" => Ok(ClientMessage::Configure(Box::new(serde_json::from_value(payload).map_err(invalid)?))),
        "pose" => Ok(ClientMessage::Pose(serde_json::from_value(payload).map_err(invalid)?)),
        other => Err(WireError::new(ErrorCode::UnknownType, format!("unknown message type `{other}`"))),
    }
}

/// Intensities as fixed six-digit decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotorLevels {
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "B")]
    pub b: String,
    #[serde(rename = "C")]
    pub c: String,
    #[serde(rename = "D")]
    pub d: String,
}

pub fn format_intensity(v: f64) -> String {
    format!("{v:.6}")
}

impl MotorLevels {
    pub fn from_frame(frame: &VibrationFrame) -> Self {
        let [a, b, c, d] = frame.intensity.map(format_intensity);
        Self { a, b, c, d }
    }

    pub fn values(&self) -> Option<[f64; 4]> {
        Some([self.a.parse().ok()?, self.b.parse().ok()?, self.c.parse().ok()?, self.d.parse().ok()?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloAck {
    pub engine_version: String,
    pub conditions: Vec<Condition>,
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub trial: u32,
    pub t: f64,
    pub intensity: MotorLevels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEvent {
    pub trial: u32,
    pub kind: EventKind,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPhase {
    Waiting,
    Active,
    Buzzing,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub trial: u32,
    pub participant: u32,
    pub state: TrialPhase,
    pub condition: Condition,
    pub mode: Mode,
    #[serde(default)]
    pub outcome: Option<Outcome>,
    #[serde(default)]
    pub completion_time: Option<f64>,
    /// Revealed only once the trial has finished.
    #[serde(default)]
    pub target: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMessage {
    pub code: ErrorCode,
    pub message: String,
    /// The server closes the connection after a fatal error.
    pub fatal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(HelloAck),
    Frame(WireFrame),
    Event(WireEvent),
    TrialState(TrialState),
    Error(ErrorMessage),
}

#[derive(Serialize)]
struct Outgoing<'a> {
    #[serde(flatten)]
    message: &'a ServerMessage,
    version: u32,
}

#[derive(Deserialize)]
struct Incoming {
    #[serde(flatten)]
    message: ServerMessage,
    version: u32,
}

impl ServerMessage {
    pub fn error(err: &WireError, fatal: bool) -> Self {
        ServerMessage::Error(ErrorMessage { code: err.code, message: err.message.clone(), fatal })
    }

    /// One line of JSON without the trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(&Outgoing { message: self, version: PROTOCOL_VERSION })
            .expect("server messages always serialize")
    }

    /// Parses a server line; used by clients and tests.
    pub fn decode(line: &str) -> Result<Self, WireError> {
        let incoming: Incoming =
            serde_json::from_str(line).map_err(|e| WireError::new(ErrorCode::Malformed, e.to_string()))?;
        if incoming.version != PROTOCOL_VERSION {
            return Err(WireError::new(ErrorCode::UnsupportedVersion, format!("version {}", incoming.version)));
        }
        Ok(incoming.message)
    }
}
