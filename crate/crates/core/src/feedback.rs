//! Per-tick vibration computation.
//!
//! Each tick turns a hand pose and a target into one [`VibrationFrame`]:
//!
//! 1. tactor vectors from the hand rotation,
//! 2. the intensity ceiling `I_max` from the hand-to-target distance,
//! 3. the desired direction (straight line or best-aligned motor axis),
//! 4. per-motor distance to that direction,
//! 5. the pull or push mapping of distance to intensity.
//!
//! Active motors never drop below the perceptibility floor (0.59); anything
//! that would map under it is switched off.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::geometry::Approach;
use crate::geometry::{
    hand_rotation, motor_distances, motor_vectors, select_direction, GeometryError, MotorId, PlanePoint,
};

/// Distances this close to `sqrt(2)` count as perpendicular (motor off).
pub const PERPENDICULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("hand-to-target distance {0} is negative")]
    NegativeDistance(f64),
    #[error("motor distance {0} is outside [0, 2]")]
    OutOfRange(f64),
    #[error("intensity ceiling {0} is outside [floor, 1]")]
    CeilingOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metaphor {
    /// Move toward the vibrating tactor.
    Pull,
    /// Move away from the vibrating tactor.
    Push,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityMode {
    /// Ceiling rises linearly from 0.8 to 1 as the hand closes in.
    Linear,
    /// Ceiling steps to 1 inside a small zone around the target.
    Zone,
}

macro_rules! impl_text {
    ($ty:ty { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$(<$ty>::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $(<$ty>::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok(<$ty>::$variant),)+
                    other => Err(format!("unknown {} `{other}`", stringify!($ty))),
                }
            }
        }
    };
}

impl_text!(Layout { Horizontal => "horizontal", Vertical => "vertical" });
impl_text!(Approach { TwoTactor => "two_tactor", WorstAxis => "worst_axis" });
impl_text!(Metaphor { Pull => "pull", Push => "push" });
impl_text!(IntensityMode { Linear => "linear", Zone => "zone" });

/// One cell of the 2 x 2 x 2 strategy design plus the scene layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub layout: Layout,
    pub approach: Approach,
    pub metaphor: Metaphor,
    pub intensity_mode: IntensityMode,
}

impl Condition {
    pub fn new(layout: Layout, approach: Approach, metaphor: Metaphor, intensity_mode: IntensityMode) -> Self {
        Self { layout, approach, metaphor, intensity_mode }
    }

    /// The eight (approach, metaphor, intensity) combinations, in a fixed order.
    pub fn strategies() -> [(Approach, Metaphor, IntensityMode); 8] {
        let mut out = [(Approach::TwoTactor, Metaphor::Pull, IntensityMode::Linear); 8];
        let mut i = 0;
        for &a in Approach::ALL {
            for &m in Metaphor::ALL {
                for &k in IntensityMode::ALL {
                    out[i] = (a, m, k);
                    i += 1;
                }
            }
        }
        out
    }

    /// All sixteen conditions.
    pub fn all() -> Vec<Condition> {
        Layout::ALL
            .iter()
            .flat_map(|&l| Self::strategies().into_iter().map(move |(a, m, k)| Condition::new(l, a, m, k)))
            .collect()
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.layout, self.approach, self.metaphor, self.intensity_mode)
    }
}

/// Constants of the intensity ceiling and the perceptibility floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityLaw {
    /// Center-to-target distance (cm).
    pub d_c: f64,
    /// Zone radius as a fraction of `d_c`.
    pub zone_fraction: f64,
    /// Lowest intensity an active motor emits.
    pub floor: f64,
    /// Ceiling when the hand is far from the target.
    pub far_max: f64,
}

impl Default for IntensityLaw {
    fn default() -> Self {
        Self { d_c: 35.0, zone_fraction: 0.2, floor: 0.59, far_max: 0.8 }
    }
}

impl IntensityLaw {
    pub fn is_valid(&self) -> bool {
        self.d_c > 0.0
            && self.zone_fraction > 0.0
            && self.zone_fraction < 1.0
            && self.floor > 0.0
            && self.floor < self.far_max
            && self.far_max <= 1.0
    }

    pub fn with_reference_distance(self, d_c: f64) -> Self {
        Self { d_c, ..self }
    }
}

/// Intensity ceiling for the current hand-to-target distance `d_h`.
pub fn max_intensity(mode: IntensityMode, d_h: f64, law: &IntensityLaw) -> Result<f64, FeedbackError> {
    if !(d_h >= 0.0) {
        return Err(FeedbackError::NegativeDistance(d_h));
    }
    Ok(match mode {
        IntensityMode::Linear => {
            if d_h > law.d_c {
                law.far_max
            } else {
                1.0 - ((1.0 - law.far_max) / law.d_c) * d_h
            }
        }
        IntensityMode::Zone => {
            if d_h <= law.zone_fraction * law.d_c {
                1.0
            } else {
                law.far_max
            }
        }
    })
}

/// Maps one motor distance to an intensity under the given metaphor.
///
/// Pull drives motors closer than `sqrt(2)` (linearly from `ceiling` at 0 down
/// toward `floor`); push drives motors farther than `sqrt(2)` (linearly from
/// `floor` up to `ceiling` at 2). Everything else is 0.
pub fn metaphor_intensity(metaphor: Metaphor, dist: f64, ceiling: f64, floor: f64) -> Result<f64, FeedbackError> {
    if !(0.0..=2.0).contains(&dist) {
        return Err(FeedbackError::OutOfRange(dist));
    }
    if !(ceiling >= floor && ceiling <= 1.0) {
        return Err(FeedbackError::CeilingOutOfRange(ceiling));
    }
    // Both maps written as interpolation weights so the endpoints are exact:
    // pull  I = I_max - (I_max - floor) / sqrt2 * dist
    // push  I = ((I_max - floor) dist + 2 floor - I_max sqrt2) / (2 - sqrt2)
    let toward_ceiling = match metaphor {
        Metaphor::Pull if dist < SQRT_2 - PERPENDICULAR_TOLERANCE => 1.0 - dist / SQRT_2,
        Metaphor::Push if dist > SQRT_2 + PERPENDICULAR_TOLERANCE => (dist - SQRT_2) / (2.0 - SQRT_2),
        _ => return Ok(0.0),
    };
    let raw = ceiling * toward_ceiling + floor * (1.0 - toward_ceiling);
    // Below the floor the motor would be imperceptible.
    Ok(if raw < floor { 0.0 } else { raw.min(ceiling) })
}

/// Commanded intensities for the four tactors at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationFrame {
    pub t: f64,
    pub intensity: [f64; 4],
}

impl VibrationFrame {
    pub fn off(t: f64) -> Self {
        Self { t, intensity: [0.0; 4] }
    }

    /// All four tactors at full drive (trial-end buzz).
    pub fn buzz(t: f64) -> Self {
        Self { t, intensity: [1.0; 4] }
    }

    pub fn get(&self, motor: MotorId) -> f64 {
        self.intensity[motor.index()]
    }

    pub fn active_motors(&self) -> impl Iterator<Item = MotorId> + '_ {
        MotorId::ALL.into_iter().filter(move |m| self.get(*m) > 0.0)
    }

    pub fn active_count(&self) -> usize {
        self.intensity.iter().filter(|&&i| i > 0.0).count()
    }

    pub fn is_buzz(&self) -> bool {
        self.intensity.iter().all(|&i| i == 1.0)
    }

    pub fn is_off(&self) -> bool {
        self.intensity.iter().all(|&i| i == 0.0)
    }

    /// Bitwise equality, including the timestamp.
    pub fn bit_eq(&self, other: &VibrationFrame) -> bool {
        self.t.to_bits() == other.t.to_bits()
            && self.intensity.iter().zip(other.intensity.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Full per-tick computation from a raw pose.
#[allow(clippy::too_many_arguments)]
pub fn compute_frame(
    hand: PlanePoint,
    wrist: PlanePoint,
    target: PlanePoint,
    center: PlanePoint,
    condition: &Condition,
    law: &IntensityLaw,
    t: f64,
) -> Result<VibrationFrame, FeedbackError> {
    let gamma = hand_rotation(wrist, hand)?;
    compute_frame_with_rotation(hand, gamma, target, center, condition, law, t)
}

/// As [`compute_frame`], with the hand rotation already known.
///
/// The reference distance `d_c` is the actual center-to-target distance; the
/// law's own `d_c` is used only when center and target coincide.
#[allow(clippy::too_many_arguments)]
pub fn compute_frame_with_rotation(
    hand: PlanePoint,
    gamma: f64,
    target: PlanePoint,
    center: PlanePoint,
    condition: &Condition,
    law: &IntensityLaw,
    t: f64,
) -> Result<VibrationFrame, FeedbackError> {
    let motors = motor_vectors(gamma);
    let d_c = center.distance(target);
    let law = if d_c > 0.0 { law.with_reference_distance(d_c) } else { *law };
    let ceiling = max_intensity(condition.intensity_mode, hand.distance(target), &law)?;
    let direction = select_direction(hand, target, condition.approach, &motors)?;
    let distances = motor_distances(&motors, direction)?;

    let mut intensity = [0.0; 4];
    for (m, dist) in distances.iter() {
        intensity[m.index()] = metaphor_intensity(condition.metaphor, dist, ceiling, law.floor)?;
    }
    Ok(VibrationFrame { t, intensity })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAW: IntensityLaw = IntensityLaw { d_c: 35.0, zone_fraction: 0.2, floor: 0.59, far_max: 0.8 };

    fn close4(a: f64, b: f64) -> bool {
        (a - b).abs() < 5e-5
    }

    #[test]
    fn linear_ceiling() {
        assert_eq!(max_intensity(IntensityMode::Linear, 0.0, &LAW).unwrap(), 1.0);
        assert!(close4(max_intensity(IntensityMode::Linear, 35.0, &LAW).unwrap(), 0.8));
        assert!(close4(max_intensity(IntensityMode::Linear, 17.5, &LAW).unwrap(), 0.9));
        assert_eq!(max_intensity(IntensityMode::Linear, 80.0, &LAW).unwrap(), 0.8);
    }

    #[test]
    fn zone_ceiling() {
        assert_eq!(max_intensity(IntensityMode::Zone, 10.0, &LAW).unwrap(), 0.8);
        assert_eq!(max_intensity(IntensityMode::Zone, 6.9, &LAW).unwrap(), 1.0);
        // inclusive boundary at 0.2 * 35 = 7
        assert_eq!(max_intensity(IntensityMode::Zone, 7.0, &LAW).unwrap(), 1.0);
        assert_eq!(max_intensity(IntensityMode::Zone, 7.000001, &LAW).unwrap(), 0.8);
    }

    #[test]
    fn negative_distance_rejected() {
        assert_eq!(max_intensity(IntensityMode::Linear, -1.0, &LAW), Err(FeedbackError::NegativeDistance(-1.0)));
        assert!(max_intensity(IntensityMode::Zone, f64::NAN, &LAW).is_err());
    }

    #[test]
    fn pull_mapping() {
        assert_eq!(metaphor_intensity(Metaphor::Pull, 0.0, 0.8, 0.59).unwrap(), 0.8);
        for ceiling in [0.8, 0.9, 1.0] {
            assert_eq!(metaphor_intensity(Metaphor::Pull, SQRT_2, ceiling, 0.59).unwrap(), 0.0);
            assert_eq!(metaphor_intensity(Metaphor::Pull, 2.0, ceiling, 0.59).unwrap(), 0.0);
        }
        let i = metaphor_intensity(Metaphor::Pull, 0.7654, 1.0, 0.59).unwrap();
        assert!(close4(i, 0.7781), "{i}");
    }

    #[test]
    fn push_mapping() {
        assert_eq!(metaphor_intensity(Metaphor::Push, 2.0, 0.8, 0.59).unwrap(), 0.8);
        assert_eq!(metaphor_intensity(Metaphor::Push, 2.0, 1.0, 0.59).unwrap(), 1.0);
        assert_eq!(metaphor_intensity(Metaphor::Push, SQRT_2, 0.9, 0.59).unwrap(), 0.0);
        assert_eq!(metaphor_intensity(Metaphor::Push, 0.0, 0.9, 0.59).unwrap(), 0.0);
        let i = metaphor_intensity(Metaphor::Push, 1.8, 1.0, 0.59).unwrap();
        assert!(close4(i, 0.8600), "{i}");
    }

    #[test]
    fn mapping_range_errors() {
        assert_eq!(metaphor_intensity(Metaphor::Pull, 2.1, 0.8, 0.59), Err(FeedbackError::OutOfRange(2.1)));
        assert!(metaphor_intensity(Metaphor::Push, -0.1, 0.8, 0.59).is_err());
        assert!(metaphor_intensity(Metaphor::Push, 1.0, 1.2, 0.59).is_err());
    }

    #[test]
    fn pull_just_inside_perpendicular_stays_at_or_above_floor() {
        let i = metaphor_intensity(Metaphor::Pull, SQRT_2 - 1e-9, 1.0, 0.59).unwrap();
        assert!((0.59..0.5901).contains(&i));
    }

    fn frame(target: PlanePoint, cond: Condition) -> VibrationFrame {
        compute_frame(PlanePoint::ORIGIN, PlanePoint::new(0.0, -10.0), target, PlanePoint::ORIGIN, &cond, &LAW, 0.0)
            .unwrap()
    }

    #[test]
    fn frame_worst_axis_pull_and_push() {
        let mut cond = Condition::new(Layout::Vertical, Approach::WorstAxis, Metaphor::Pull, IntensityMode::Linear);
        let f = frame(PlanePoint::new(35.0, 0.0), cond);
        assert_eq!(f.active_motors().collect::<Vec<_>>(), vec![MotorId::C]);
        assert!(close4(f.get(MotorId::C), 0.8));

        cond.metaphor = Metaphor::Push;
        let f = frame(PlanePoint::new(35.0, 0.0), cond);
        assert_eq!(f.active_motors().collect::<Vec<_>>(), vec![MotorId::D]);
        assert!(close4(f.get(MotorId::D), 0.8));
    }

    #[test]
    fn frame_two_tactor_diagonal() {
        let cond = Condition::new(Layout::Vertical, Approach::TwoTactor, Metaphor::Pull, IntensityMode::Linear);
        let f = frame(PlanePoint::new(24.75, 24.75), cond);
        assert_eq!(f.active_motors().collect::<Vec<_>>(), vec![MotorId::A, MotorId::C]);
        assert!(close4(f.get(MotorId::A), 0.6863), "{:?}", f);
        assert!((f.get(MotorId::A) - f.get(MotorId::C)).abs() < 1e-12);
    }

    #[test]
    fn frame_propagates_degenerate_pose() {
        let cond = Condition::new(Layout::Vertical, Approach::TwoTactor, Metaphor::Pull, IntensityMode::Linear);
        let err = compute_frame(
            PlanePoint::ORIGIN,
            PlanePoint::new(0.1, 0.0),
            PlanePoint::new(10.0, 0.0),
            PlanePoint::ORIGIN,
            &cond,
            &LAW,
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, FeedbackError::Geometry(GeometryError::DegeneratePose { .. })));
    }

    #[test]
    fn text_round_trip() {
        for c in Condition::all() {
            assert_eq!(c.layout.as_str().parse::<Layout>().unwrap(), c.layout);
            assert_eq!(c.approach.as_str().parse::<Approach>().unwrap(), c.approach);
            assert_eq!(c.metaphor.as_str().parse::<Metaphor>().unwrap(), c.metaphor);
            assert_eq!(c.intensity_mode.as_str().parse::<IntensityMode>().unwrap(), c.intensity_mode);
        }
        assert_eq!(Condition::all().len(), 16);
        assert!("sideways".parse::<Layout>().is_err());
    }
}
