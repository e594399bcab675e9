//! Per-connection protocol state: handshake, trial configuration, pose
//! stepping and trial logging. Independent of the transport.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use peritact_core::calibration::{next_target_angle, place_target};
use peritact_core::log::save_record;
use peritact_core::session::{Phase, SessionEvent};
use peritact_core::simagent::run_trial;
use peritact_core::{
    stream_rng, CalibrationData, Condition, PlanePoint, PoseSample, RunConfig, Session, TrialPlan, TrialRecord,
    ENGINE_VERSION,
};

use crate::protocol::{
    decode_client, ClientMessage, Configure, ErrorCode, HelloAck, Mode, MotorLevels, Pose, ServerMessage, TrialPhase,
    TrialState, WireError, WireEvent, WireFrame,
};

/// Shared, read-only server configuration.
#[derive(Debug)]
pub struct ServerContext {
    pub calibration: CalibrationData,
    pub config: RunConfig,
    /// Directory receiving one log per finished trial.
    pub log_dir: Option<PathBuf>,
    next_id: AtomicU64,
}

impl ServerContext {
    pub fn new(calibration: CalibrationData, config: RunConfig, log_dir: Option<PathBuf>) -> Self {
        Self { calibration, config, log_dir, next_id: AtomicU64::new(1) }
    }

    fn connection_id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }
}

/// Messages to send back for one input line.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    /// Close the connection after sending.
    pub close: bool,
}

impl Reply {
    fn one(msg: ServerMessage) -> Self {
        Self { messages: vec![msg], close: false }
    }

    fn error(err: WireError) -> Self {
        Self::one(ServerMessage::error(&err, false))
    }

    fn fatal(err: WireError) -> Self {
        Self { messages: vec![ServerMessage::error(&err, true)], close: true }
    }
}

struct Running {
    session: Session,
    last_phase: TrialPhase,
}

enum State {
    AwaitHello,
    Idle,
    Trial(Box<Running>),
    Closed,
}

pub struct Connection {
    ctx: Arc<ServerContext>,
    id: u64,
    state: State,
    trials: u32,
    prev_angle: Option<f64>,
    last_t: f64,
    saved: Vec<PathBuf>,
}

fn phase_of(phase: Phase) -> TrialPhase {
    match phase {
        Phase::Waiting => TrialPhase::Waiting,
        Phase::Active => TrialPhase::Active,
        Phase::Buzzing { .. } => TrialPhase::Buzzing,
        Phase::Finished(_) => TrialPhase::Finished,
    }
}

impl Connection {
    pub fn new(ctx: Arc<ServerContext>) -> Self {
        let id = ctx.connection_id();
        Self { ctx, id, state: State::AwaitHello, trials: 0, prev_angle: None, last_t: 0.0, saved: Vec::new() }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.state, State::Closed)
    }

    /// Log files written so far by this connection.
    pub fn saved_logs(&self) -> &[PathBuf] {
        &self.saved
    }

    /// Handles one line of raw input.
    pub fn handle_bytes(&mut self, bytes: &[u8]) -> Reply {
        match std::str::from_utf8(bytes) {
            Ok(line) => self.handle_line(line),
            Err(_) => self.reject(WireError::new(ErrorCode::Malformed, "line is not valid UTF-8")),
        }
    }

    pub fn handle_line(&mut self, line: &str) -> Reply {
        if self.is_closed() {
            return Reply { messages: Vec::new(), close: true };
        }
        let line = line.trim();
        if line.is_empty() {
            return Reply::default();
        }
        match decode_client(line) {
            Err(err) => self.reject(err),
            Ok(ClientMessage::Hello(_)) => self.on_hello(),
            Ok(_) if matches!(self.state, State::AwaitHello) => {
                self.close_with(WireError::new(ErrorCode::ProtocolViolation, "expected hello first"))
            }
            Ok(ClientMessage::Configure(cfg)) => self.on_configure(*cfg),
            Ok(ClientMessage::Pose(pose)) => self.on_pose(pose),
        }
    }

    /// Reports an oversized line and closes.
    pub fn line_too_long(&mut self) -> Reply {
        self.close_with(WireError::new(
            ErrorCode::LineTooLong,
            format!("line exceeds {} bytes", crate::protocol::MAX_LINE_BYTES),
        ))
    }

    fn reject(&mut self, err: WireError) -> Reply {
        if matches!(self.state, State::AwaitHello) {
            let message = format!("expected hello first ({err})");
            return self.close_with(WireError::new(ErrorCode::ProtocolViolation, message));
        }
        if err.code == ErrorCode::UnsupportedVersion {
            return self.close_with(err);
        }
        Reply::error(err)
    }

    fn close_with(&mut self, err: WireError) -> Reply {
        let mut reply = Reply::fatal(err);
        let mut closing = self.finish_trial();
        closing.append(&mut reply.messages);
        reply.messages = closing;
        self.state = State::Closed;
        reply
    }

    fn on_hello(&mut self) -> Reply {
        if !matches!(self.state, State::AwaitHello) {
            return self.close_with(WireError::new(ErrorCode::ProtocolViolation, "duplicate hello"));
        }
        self.state = State::Idle;
        Reply::one(ServerMessage::Hello(HelloAck {
            engine_version: ENGINE_VERSION.to_string(),
            conditions: Condition::all(),
            modes: vec![Mode::Simulated, Mode::ExternalPose],
        }))
    }

    fn plan_for(&mut self, cfg: &Configure) -> Result<TrialPlan, WireError> {
        let participant = cfg.participant.unwrap_or(1);
        let index = cfg.trial.unwrap_or(self.trials + 1);
        let stream = (u64::from(participant) << 32) | u64::from(index);
        let angle = match cfg.target_angle_deg {
            Some(a) => a,
            None => next_target_angle(self.prev_angle, &mut stream_rng(cfg.seed, stream)),
        };
        let target = place_target(angle, &self.ctx.calibration)
            .map_err(|e| WireError::new(ErrorCode::InvalidPayload, format!("configure: {e}")))?;
        let target = peritact_core::TargetSpec { attain_radius: self.ctx.config.engine.attain_radius, ..target };
        self.prev_angle = Some(angle);
        Ok(TrialPlan { participant, index, condition: cfg.condition, target, repetition: 1 })
    }

    fn on_configure(&mut self, cfg: Configure) -> Reply {
        if let State::Trial(run) = &self.state {
            if !run.session.is_finished() {
                return Reply::error(WireError::new(
                    ErrorCode::TrialInProgress,
                    format!("trial {} is still running", run.session.plan().index),
                ));
            }
        }
        let agent = cfg.agent.unwrap_or(self.ctx.config.agent);
        if let Err(e) = agent.validate() {
            return Reply::error(WireError::new(ErrorCode::InvalidPayload, format!("configure: agent: {e}")));
        }
        let plan = match self.plan_for(&cfg) {
            Ok(p) => p,
            Err(e) => return Reply::error(e),
        };
        self.trials += 1;
        match cfg.mode {
            Mode::ExternalPose => {
                let session = Session::new(plan, self.ctx.calibration.center, self.ctx.config.engine);
                let state = self.trial_state(&plan, TrialPhase::Waiting, Mode::ExternalPose, None);
                self.state = State::Trial(Box::new(Running { session, last_phase: TrialPhase::Waiting }));
                Reply::one(state)
            }
            Mode::Simulated => self.simulate(plan, &agent, cfg.seed),
        }
    }

    fn simulate(&mut self, plan: TrialPlan, agent: &peritact_core::AgentParams, seed: u64) -> Reply {
        let record = match run_trial(&plan, &self.ctx.calibration, agent, &self.ctx.config.engine, seed) {
            Ok(r) => r,
            Err(e) => return Reply::error(WireError::new(ErrorCode::Internal, e.to_string())),
        };
        let mut messages = vec![self.trial_state(&plan, TrialPhase::Waiting, Mode::Simulated, None)];
        let mut events = record.events.iter().peekable();
        for frame in &record.frames {
            messages.push(frame_message(plan.index, frame));
            while let Some(e) = events.next_if(|e| e.t <= frame.t) {
                messages.push(event_message(plan.index, e));
            }
        }
        messages.extend(events.map(|e| event_message(plan.index, e)));
        messages.push(self.trial_state(&plan, TrialPhase::Finished, Mode::Simulated, Some(&record)));
        if let Some(err) = self.save(&record) {
            messages.push(err);
        }
        self.state = State::Idle;
        Reply { messages, close: false }
    }

    fn on_pose(&mut self, pose: Pose) -> Reply {
        let State::Trial(run) = &mut self.state else {
            return Reply::error(WireError::new(ErrorCode::NotConfigured, "not configured: send configure first"));
        };
        let sample = PoseSample {
            t: pose.t,
            hand: PlanePoint::new(pose.hand[0], pose.hand[1]),
            wrist: PlanePoint::new(pose.wrist[0], pose.wrist[1]),
            valid: pose.valid,
        };
        let out = match run.session.step(sample) {
            Ok(out) => out,
            Err(e) => return Reply::error(WireError::new(ErrorCode::InvalidPose, e.to_string())),
        };
        self.last_t = pose.t;
        let plan = *run.session.plan();
        let mut messages = vec![frame_message(plan.index, &out.frame)];
        messages.extend(out.events.iter().map(|e| event_message(plan.index, e)));
        let phase = phase_of(run.session.phase());
        if phase != run.last_phase {
            run.last_phase = phase;
            if phase != TrialPhase::Finished {
                messages.push(self.trial_state(&plan, phase, Mode::ExternalPose, None));
            }
        }
        if phase == TrialPhase::Finished {
            messages.extend(self.finish_trial());
        }
        Reply { messages, close: false }
    }

    fn end_trial(&mut self) -> Option<TrialRecord> {
        let State::Trial(run) = std::mem::replace(&mut self.state, State::Idle) else {
            return None;
        };
        let mut session = run.session;
        if !session.is_finished() {
            session.abort(self.last_t).ok()?;
        }
        session.finalize().ok()
    }

    /// Finalizes the current trial, aborting it if unfinished, writes its log
    /// and returns the closing `trial_state`.
    fn finish_trial(&mut self) -> Vec<ServerMessage> {
        let Some(record) = self.end_trial() else {
            return Vec::new();
        };
        let mut messages =
            vec![self.trial_state(&record.plan, TrialPhase::Finished, Mode::ExternalPose, Some(&record))];
        messages.extend(self.save(&record));
        messages
    }

    /// Called when the peer goes away: an unfinished trial ends as aborted.
    pub fn disconnect(&mut self) -> Option<TrialRecord> {
        let record = self.end_trial();
        if let Some(r) = &record {
            if let Some(ServerMessage::Error(e)) = self.save(r) {
                eprintln!("warning: {}", e.message);
            }
        }
        self.state = State::Closed;
        record
    }

    fn save(&mut self, record: &TrialRecord) -> Option<ServerMessage> {
        let dir = self.ctx.log_dir.as_ref()?;
        let path = dir.join(format!("c{:04}_p{:03}_t{:03}.jsonl", self.id, record.plan.participant, record.plan.index));
        match save_record(record, &path) {
            Ok(()) => {
                self.saved.push(path);
                None
            }
            Err(e) => Some(ServerMessage::error(
                &WireError::new(ErrorCode::Internal, format!("writing {}: {e}", path.display())),
                false,
            )),
        }
    }

    fn trial_state(
        &self,
        plan: &TrialPlan,
        state: TrialPhase,
        mode: Mode,
        record: Option<&TrialRecord>,
    ) -> ServerMessage {
        let target = plan.target.position;
        ServerMessage::TrialState(TrialState {
            trial: plan.index,
            participant: plan.participant,
            state,
            condition: plan.condition,
            mode,
            outcome: record.map(|r| r.outcome),
            completion_time: record.and_then(|r| r.completion_time),
            target: record.map(|_| [target.x, target.y]),
        })
    }
}

fn frame_message(trial: u32, frame: &peritact_core::VibrationFrame) -> ServerMessage {
    ServerMessage::Frame(WireFrame { trial, t: frame.t, intensity: MotorLevels::from_frame(frame) })
}

fn event_message(trial: u32, event: &SessionEvent) -> ServerMessage {
    ServerMessage::Event(WireEvent { trial, kind: event.kind, t: event.t })
}
