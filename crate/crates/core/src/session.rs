//! Trial scheduling and the per-trial state machine.
//!
//! A trial moves through `Waiting -> Active -> Buzzing -> Finished`. It arms
//! when the hand first comes within the attainment radius of the board
//! center, guides until the hand is within the attainment radius of the
//! target, then buzzes all four tactors for `buzz_s` before finishing. Timeout
//! and abort end an active trial early.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{next_target_angle, place_target, CalibrationData, CalibrationError, TargetSpec};
use crate::config::EngineConfig;
use crate::feedback::{compute_frame_with_rotation, Condition, FeedbackError, Layout, VibrationFrame};
use crate::geometry::{hand_rotation, PlanePoint};
use crate::stream_rng;

/// Slack when comparing tick-quantized times against durations.
const TIME_EPS: f64 = 1e-9;

pub const TRIALS_PER_PARTICIPANT: usize = 48;
pub const REPETITIONS: u8 = 3;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("trial is not active")]
    TrialNotActive,
    #[error("trial has not finished")]
    TrialStillActive,
    #[error("sample time {t} precedes previous sample at {prev}")]
    TimeWentBackwards { t: f64, prev: f64 },
    #[error("sample time {0} is not finite")]
    BadTime(f64),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// One tracker reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub hand: PlanePoint,
    pub wrist: PlanePoint,
    /// False when the tracker lost the hand this tick.
    pub valid: bool,
}

impl PoseSample {
    pub fn new(t: f64, hand: PlanePoint, wrist: PlanePoint) -> Self {
        Self { t, hand, wrist, valid: true }
    }

    pub fn dropout(t: f64) -> Self {
        Self { t, hand: PlanePoint::ORIGIN, wrist: PlanePoint::ORIGIN, valid: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub participant: u32,
    /// 1-based position in the participant's schedule.
    pub index: u32,
    pub condition: Condition,
    pub target: TargetSpec,
    pub repetition: u8,
}

impl TrialPlan {
    /// Identifier of this trial's random stream.
    pub fn stream_id(&self) -> u64 {
        (u64::from(self.participant) << 32) | u64::from(self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TrialStart,
    TargetReached,
    BuzzStart,
    BuzzEnd,
    Timeout,
    Dropout,
    Aborted,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TrialStart => "trial_start",
            EventKind::TargetReached => "target_reached",
            EventKind::BuzzStart => "buzz_start",
            EventKind::BuzzEnd => "buzz_end",
            EventKind::Timeout => "timeout",
            EventKind::Dropout => "dropout",
            EventKind::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub kind: EventKind,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    Timeout,
    Aborted,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::Timeout => "timeout",
            Outcome::Aborted => "aborted",
        }
    }
}

/// Where an ingested record came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub file: String,
    pub first_line: usize,
    pub last_line: usize,
}

/// Everything recorded about one finished trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub plan: TrialPlan,
    pub center: PlanePoint,
    pub engine: EngineConfig,
    pub samples: Vec<PoseSample>,
    /// One per sample for engine-produced records; empty for ingested data.
    pub frames: Vec<VibrationFrame>,
    pub events: Vec<SessionEvent>,
    pub outcome: Outcome,
    pub completion_time: Option<f64>,
    pub provenance: Option<Provenance>,
}

impl TrialRecord {
    pub fn event_time(&self, kind: EventKind) -> Option<f64> {
        self.events.iter().find(|e| e.kind == kind).map(|e| e.t)
    }
}

/// Counterbalanced 48-trial schedule for one participant.
///
/// Odd participants start with the horizontal layout. Within each 24-trial
/// layout block the eight strategy combinations appear three times each in a
/// seeded random order. Target angles are chained through the whole schedule
/// so every consecutive pair differs by at least 60 degrees.
pub fn schedule(participant: u32, seed: u64, cal: &CalibrationData) -> Result<Vec<TrialPlan>, SessionError> {
    let participant = participant.max(1);
    let mut rng = stream_rng(seed, u64::from(participant));
    let blocks = if participant % 2 == 1 {
        [Layout::Horizontal, Layout::Vertical]
    } else {
        [Layout::Vertical, Layout::Horizontal]
    };

    let mut plans = Vec::with_capacity(TRIALS_PER_PARTICIPANT);
    let mut prev_angle = None;
    for layout in blocks {
        let mut block: Vec<(Condition, u8)> = Condition::strategies()
            .into_iter()
            .flat_map(|(a, m, k)| (1..=REPETITIONS).map(move |r| (Condition::new(layout, a, m, k), r)))
            .collect();
        block.shuffle(&mut rng);
        // Repetition numbers follow order of appearance within the block.
        let mut seen: Vec<(Condition, u8)> = Vec::new();
        for (condition, _) in block {
            let rep = match seen.iter_mut().find(|(c, _)| *c == condition) {
                Some((_, n)) => {
                    *n += 1;
                    *n
                }
                None => {
                    seen.push((condition, 1));
                    1
                }
            };
            let angle = next_target_angle(prev_angle, &mut rng);
            prev_angle = Some(angle);
            plans.push(TrialPlan {
                participant,
                index: plans.len() as u32 + 1,
                condition,
                target: place_target(angle, cal)?,
                repetition: rep,
            });
        }
    }
    Ok(plans)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    /// Waiting for the hand to reach the board center.
    Waiting,
    Active,
    Buzzing {
        since: f64,
    },
    Finished(Outcome),
}

/// What one call to [`Session::step`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub frame: VibrationFrame,
    pub events: Vec<SessionEvent>,
}

/// Live state of one trial.
#[derive(Debug, Clone)]
pub struct Session {
    plan: TrialPlan,
    center: PlanePoint,
    engine: EngineConfig,
    phase: Phase,
    start_t: Option<f64>,
    reached_t: Option<f64>,
    last_t: Option<f64>,
    last_valid: Option<(PlanePoint, PlanePoint)>,
    last_gamma: f64,
    samples: Vec<PoseSample>,
    frames: Vec<VibrationFrame>,
    events: Vec<SessionEvent>,
}

impl Session {
    pub fn new(plan: TrialPlan, center: PlanePoint, engine: EngineConfig) -> Self {
        Self {
            plan,
            center,
            engine,
            phase: Phase::Waiting,
            start_t: None,
            reached_t: None,
            last_t: None,
            last_valid: None,
            last_gamma: 0.0,
            samples: Vec::new(),
            frames: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn plan(&self) -> &TrialPlan {
        &self.plan
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Finished(_))
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Consumes one pose sample and returns the frame to drive.
    pub fn step(&mut self, sample: PoseSample) -> Result<StepOutput, SessionError> {
        if self.is_finished() {
            return Err(SessionError::TrialNotActive);
        }
        if !sample.t.is_finite() {
            return Err(SessionError::BadTime(sample.t));
        }
        if let Some(prev) = self.last_t {
            if sample.t < prev {
                return Err(SessionError::TimeWentBackwards { t: sample.t, prev });
            }
        }
        let t = sample.t;
        let mut events = Vec::new();

        let pose = if sample.valid && sample.hand.is_sane() && sample.wrist.is_sane() {
            self.last_valid = Some((sample.hand, sample.wrist));
            Some((sample.hand, sample.wrist))
        } else {
            if self.phase == Phase::Active {
                events.push(SessionEvent { kind: EventKind::Dropout, t });
            }
            self.last_valid
        };

        if self.phase == Phase::Waiting {
            match pose {
                Some((hand, _)) if sample.valid && hand.distance(self.center) <= self.engine.attain_radius => {
                    self.phase = Phase::Active;
                    self.start_t = Some(t);
                    events.push(SessionEvent { kind: EventKind::TrialStart, t });
                }
                _ => return Ok(self.emit(sample, VibrationFrame::off(t), events)),
            }
        }

        let frame = match self.phase {
            Phase::Active => {
                let start = self.start_t.expect("active trial has a start time");
                if t - start >= self.engine.timeout_s - TIME_EPS {
                    self.phase = Phase::Finished(Outcome::Timeout);
                    events.push(SessionEvent { kind: EventKind::Timeout, t });
                    VibrationFrame::off(t)
                } else {
                    match pose {
                        None => VibrationFrame::off(t),
                        Some((hand, wrist)) => self.guide(hand, wrist, t, &mut events)?,
                    }
                }
            }
            Phase::Buzzing { since } => {
                if t - since >= self.engine.buzz_s - TIME_EPS {
                    self.phase = Phase::Finished(Outcome::Reached);
                    events.push(SessionEvent { kind: EventKind::BuzzEnd, t });
                    VibrationFrame::off(t)
                } else {
                    VibrationFrame::buzz(t)
                }
            }
            Phase::Waiting | Phase::Finished(_) => unreachable!("handled above"),
        };
        Ok(self.emit(sample, frame, events))
    }

    fn guide(
        &mut self,
        hand: PlanePoint,
        wrist: PlanePoint,
        t: f64,
        events: &mut Vec<SessionEvent>,
    ) -> Result<VibrationFrame, SessionError> {
        let target = self.plan.target.position;
        if hand.distance(target) <= self.engine.attain_radius {
            self.phase = Phase::Buzzing { since: t };
            self.reached_t = Some(t);
            events.push(SessionEvent { kind: EventKind::TargetReached, t });
            events.push(SessionEvent { kind: EventKind::BuzzStart, t });
            return Ok(VibrationFrame::buzz(t));
        }
        // Wrist too close to the hand: keep the previous rotation.
        if let Ok(gamma) = hand_rotation(wrist, hand) {
            self.last_gamma = gamma;
        }
        let law = self.engine.intensity_law();
        Ok(compute_frame_with_rotation(hand, self.last_gamma, target, self.center, &self.plan.condition, &law, t)?)
    }

    fn emit(&mut self, sample: PoseSample, frame: VibrationFrame, events: Vec<SessionEvent>) -> StepOutput {
        self.last_t = Some(sample.t);
        self.samples.push(sample);
        self.frames.push(frame);
        self.events.extend_from_slice(&events);
        StepOutput { frame, events }
    }

    /// Ends an unfinished trial as aborted.
    pub fn abort(&mut self, t: f64) -> Result<SessionEvent, SessionError> {
        if self.is_finished() {
            return Err(SessionError::TrialNotActive);
        }
        self.phase = Phase::Finished(Outcome::Aborted);
        let event = SessionEvent { kind: EventKind::Aborted, t };
        self.events.push(event);
        Ok(event)
    }

    pub fn finalize(self) -> Result<TrialRecord, SessionError> {
        let Phase::Finished(outcome) = self.phase else {
            return Err(SessionError::TrialStillActive);
        };
        let completion_time = match (outcome, self.start_t, self.reached_t) {
            (Outcome::Reached, Some(s), Some(r)) => Some(r - s),
            _ => None,
        };
        Ok(TrialRecord {
            plan: self.plan,
            center: self.center,
            engine: self.engine,
            samples: self.samples,
            frames: self.frames,
            events: self.events,
            outcome,
            completion_time,
            provenance: None,
        })
    }
}
