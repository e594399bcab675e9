//! Vibrotactile guidance engine for reaching hidden targets in peripersonal
//! space with a four-tactor glove.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: tactor vectors, motor distances, direction selection
//! * [`feedback`]: the per-tick vibration frame
//! * [`calibration`]: board model and target placement
//! * [`session`]: trial schedule and state machine
//! * [`simagent`]: simulated hand for closed-loop runs
//! * [`analysis`]: trajectory metrics and summaries
//! * [`log`]: trial log format and replay

pub mod analysis;
pub mod calibration;
pub mod config;
pub mod feedback;
pub mod geometry;
pub mod log;
pub mod session;
pub mod simagent;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use calibration::{CalibrationData, TargetSpec};
pub use config::{EngineConfig, RunConfig};
pub use feedback::{Approach, Condition, IntensityLaw, IntensityMode, Layout, Metaphor, VibrationFrame};
pub use geometry::{MotorId, PlanePoint};
pub use session::{Outcome, PoseSample, Session, SessionEvent, TrialPlan, TrialRecord};
pub use simagent::AgentParams;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Independent random stream `stream` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
