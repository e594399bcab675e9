//! A simulated hand that closes the guidance loop without hardware.
//!
//! The agent is a behavioral stand-in, not a model of human motor control.
//! Each tick it perceives the frame (possibly confusing simultaneous cues),
//! queues the percept, and moves at constant speed along the percept that has
//! cleared its reaction delay. Push guidance adds an extra inversion delay
//! before the agent moves away from the felt tactor.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationData;
use crate::config::EngineConfig;
use crate::feedback::{Layout, Metaphor, VibrationFrame};
use crate::geometry::{motor_vectors, MotorVectors, PlanePoint};
use crate::session::{PoseSample, Session, SessionError, TrialPlan, TrialRecord};
use crate::stream_rng;

const WRIST_OFFSET: PlanePoint = PlanePoint::new(0.0, -10.0);
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    /// Hand speed (cm/s).
    pub speed: f64,
    /// Per-tick heading noise (radians, standard deviation).
    pub angular_noise_sd: f64,
    pub reaction_delay: f64,
    /// Extra delay under push guidance (s).
    pub push_inversion_delay: f64,
    /// Chance of feeling one of several simultaneous cues at a wrong tactor.
    pub confusion_prob: f64,
    pub perception_threshold: f64,
    /// Fixed in-plane hand tilt (radians); the wrist offset rotates with it.
    pub hand_tilt: f64,
    pub horizontal_speed_factor: f64,
    pub vertical_speed_factor: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            speed: 20.0,
            angular_noise_sd: 0.15,
            reaction_delay: 0.15,
            push_inversion_delay: 0.20,
            confusion_prob: 0.25,
            perception_threshold: 0.59,
            hand_tilt: 0.0,
            horizontal_speed_factor: 1.0,
            vertical_speed_factor: 1.0,
        }
    }
}

impl AgentParams {
    /// Deterministic straight-line mover: no noise, confusion or delay.
    pub fn ideal() -> Self {
        Self {
            angular_noise_sd: 0.0,
            reaction_delay: 0.0,
            push_inversion_delay: 0.0,
            confusion_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.speed > 0.0, "speed must be positive"),
            (self.angular_noise_sd >= 0.0, "angular_noise_sd must be non-negative"),
            (self.reaction_delay >= 0.0, "reaction_delay must be non-negative"),
            (self.push_inversion_delay >= 0.0, "push_inversion_delay must be non-negative"),
            ((0.0..=1.0).contains(&self.confusion_prob), "confusion_prob must be in [0, 1]"),
            ((0.0..=1.0).contains(&self.perception_threshold), "perception_threshold must be in [0, 1]"),
            (self.hand_tilt.is_finite(), "hand_tilt must be finite"),
            (self.horizontal_speed_factor > 0.0, "horizontal_speed_factor must be positive"),
            (self.vertical_speed_factor > 0.0, "vertical_speed_factor must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }

    fn speed_for(&self, layout: Layout) -> f64 {
        self.speed
            * match layout {
                Layout::Horizontal => self.horizontal_speed_factor,
                Layout::Vertical => self.vertical_speed_factor,
            }
    }
}

/// Felt direction of the cue in world coordinates, or `None` without a cue.
///
/// Returns where the vibration is felt; push inversion happens in
/// [`Agent::advance`]. When two or more motors are active the agent may
/// misattribute the source: with probability `confusion_prob` one of the
/// active cues, chosen at random, is felt at one of the other three tactors.
pub fn perceive<R: Rng + ?Sized>(
    frame: &VibrationFrame,
    motors: &MotorVectors,
    params: &AgentParams,
    rng: &mut R,
) -> Option<PlanePoint> {
    let active: Vec<_> = motors
        .iter()
        .filter(|&(m, _)| frame.get(m) > 0.0 && frame.get(m) >= params.perception_threshold)
        .map(|(m, v)| (m, v, frame.get(m)))
        .collect();
    match active.len() {
        0 => None,
        1 => Some(active[0].1),
        _ => {
            if rng.random_bool(params.confusion_prob) {
                let source = active[rng.random_range(0..active.len())].0;
                let wrong: Vec<_> = motors.iter().filter(|&(m, _)| m != source).map(|(_, v)| v).collect();
                return Some(wrong[rng.random_range(0..wrong.len())]);
            }
            // Each cue counts by how far it rises above the detection threshold.
            let above =
                active.iter().fold(PlanePoint::ORIGIN, |acc, &(_, v, i)| acc + v * (i - params.perception_threshold));
            let sum = if above.norm() > 1e-12 {
                above
            } else {
                active.iter().fold(PlanePoint::ORIGIN, |acc, &(_, v, _)| acc + v)
            };
            let norm = sum.norm();
            (norm > 1e-12).then(|| sum * (1.0 / norm))
        }
    }
}

/// Kinematic state of the simulated hand.
#[derive(Debug, Clone)]
pub struct Agent {
    position: PlanePoint,
    wrist_offset: PlanePoint,
    clock: f64,
    pending: VecDeque<(f64, Option<PlanePoint>)>,
    acting_on: Option<PlanePoint>,
}

impl Agent {
    pub fn new(position: PlanePoint, hand_tilt: f64) -> Self {
        Self {
            position,
            // Tilt is clockwise-positive; `rotated` is counter-clockwise.
            wrist_offset: WRIST_OFFSET.rotated(-hand_tilt),
            clock: 0.0,
            pending: VecDeque::new(),
            acting_on: None,
        }
    }

    pub fn position(&self) -> PlanePoint {
        self.position
    }

    pub fn wrist(&self) -> PlanePoint {
        self.position + self.wrist_offset
    }

    pub fn sample(&self, t: f64) -> PoseSample {
        PoseSample::new(t, self.position, self.wrist())
    }

    /// Queues `perceived` and moves for `dt` along the percept that has
    /// cleared the reaction delay.
    #[allow(clippy::too_many_arguments)]
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        perceived: Option<PlanePoint>,
        metaphor: Metaphor,
        dt: f64,
        speed: f64,
        params: &AgentParams,
        rng: &mut R,
    ) {
        debug_assert!(dt > 0.0);
        self.pending.push_back((self.clock, perceived));
        let delay = params.reaction_delay
            + match metaphor {
                Metaphor::Pull => 0.0,
                Metaphor::Push => params.push_inversion_delay,
            };
        while let Some(&(t, p)) = self.pending.front() {
            if t > self.clock - delay + TIME_EPS {
                break;
            }
            self.acting_on = p;
            self.pending.pop_front();
        }
        if let Some(dir) = self.acting_on {
            let dir = match metaphor {
                Metaphor::Pull => dir,
                Metaphor::Push => -dir,
            };
            let heading = if params.angular_noise_sd > 0.0 {
                let noise = Normal::new(0.0, params.angular_noise_sd).expect("sd is positive");
                dir.rotated(noise.sample(rng))
            } else {
                dir
            };
            self.position = self.position + heading * (speed * dt);
        }
        self.clock += dt;
    }
}

/// Runs one trial at the engine tick rate until it ends.
pub fn run_trial(
    plan: &TrialPlan,
    cal: &CalibrationData,
    params: &AgentParams,
    engine: &EngineConfig,
    seed: u64,
) -> Result<TrialRecord, SessionError> {
    let mut rng: ChaCha8Rng = stream_rng(seed, plan.stream_id());
    let mut session = Session::new(*plan, cal.center, *engine);
    let mut agent = Agent::new(cal.center, params.hand_tilt);
    let motors = motor_vectors(params.hand_tilt);
    let speed = params.speed_for(plan.condition.layout);
    let dt = engine.tick_s;

    let mut tick: u64 = 0;
    loop {
        let t = tick as f64 * dt;
        let out = session.step(agent.sample(t))?;
        if session.is_finished() {
            break;
        }
        let perceived = perceive(&out.frame, &motors, params, &mut rng);
        agent.advance(perceived, plan.condition.metaphor, dt, speed, params, &mut rng);
        tick += 1;
    }
    session.finalize()
}

/// Runs many trials in parallel; results come back in plan order.
pub fn run_batch(
    plans: &[TrialPlan],
    cal: &CalibrationData,
    params: &AgentParams,
    engine: &EngineConfig,
    seed: u64,
) -> Result<Vec<TrialRecord>, SessionError> {
    plans.par_iter().map(|p| run_trial(p, cal, params, engine, seed)).collect()
}
