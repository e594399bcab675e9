//! Plane geometry for the four-tactor glove.
//!
//! Positions live on an abstract 2-D scene plane measured in centimeters. The
//! `y` axis is "up" for the vertical layout and "away from the body" for the
//! horizontal one; the engine does not care which.
//!
//! The hand rotation angle is measured from the wrist-to-hand vector to the
//! plane's vertical axis, positive clockwise as seen by a camera looking at the
//! back of the hand. Under that convention the tactor vectors are
//!
//! ```text
//! A = ( sin g,  cos g)   B = -A
//! C = ( cos g, -sin g)   D = -C
//! ```

use std::fmt;
use std::ops::{Add, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Wrist and hand closer than this (cm) give no usable rotation.
pub const MIN_POSE_SEPARATION_CM: f64 = 0.5;

/// Sanity bound on coordinates for a desk-scale scene (cm).
pub const MAX_COORDINATE_CM: f64 = 500.0;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("wrist and hand are {separation:.3} cm apart; rotation is undefined")]
    DegeneratePose { separation: f64 },
    #[error("hand coincides with the target; no direction to guide")]
    DegenerateTarget,
    #[error("direction has norm {norm}, expected a unit vector")]
    NotUnit { norm: f64 },
}

/// A point (or displacement) on the scene plane, in centimeters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const ORIGIN: PlanePoint = PlanePoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: PlanePoint) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: PlanePoint) -> f64 {
        (other - self).norm()
    }

    pub fn midpoint(self, other: PlanePoint) -> PlanePoint {
        PlanePoint::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    /// Rotates counter-clockwise (standard math orientation) by `angle` radians.
    pub fn rotated(self, angle: f64) -> PlanePoint {
        let (s, c) = angle.sin_cos();
        PlanePoint::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Finite and inside the desk-scale bound.
    pub fn is_sane(self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.x.abs() <= MAX_COORDINATE_CM
            && self.y.abs() <= MAX_COORDINATE_CM
    }
}

impl Add for PlanePoint {
    type Output = PlanePoint;
    fn add(self, rhs: PlanePoint) -> PlanePoint {
        PlanePoint::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for PlanePoint {
    type Output = PlanePoint;
    fn sub(self, rhs: PlanePoint) -> PlanePoint {
        PlanePoint::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for PlanePoint {
    type Output = PlanePoint;
    fn neg(self) -> PlanePoint {
        PlanePoint::new(-self.x, -self.y)
    }
}

impl Mul<f64> for PlanePoint {
    type Output = PlanePoint;
    fn mul(self, k: f64) -> PlanePoint {
        PlanePoint::new(self.x * k, self.y * k)
    }
}

impl fmt::Display for PlanePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The four tactors on the back of the hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotorId {
    /// Up, over the proximal phalanx of the middle finger.
    A,
    /// Down, over the carpals.
    B,
    /// Right, ulnar side.
    C,
    /// Left, radial side.
    D,
}

impl MotorId {
    /// Fixed order; also the tie-break order for worst-axis selection.
    pub const ALL: [MotorId; 4] = [MotorId::A, MotorId::B, MotorId::C, MotorId::D];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn opposite(self) -> MotorId {
        match self {
            MotorId::A => MotorId::B,
            MotorId::B => MotorId::A,
            MotorId::C => MotorId::D,
            MotorId::D => MotorId::C,
        }
    }

    pub const fn label(self) -> &'static str {
        match self {
            MotorId::A => "A",
            MotorId::B => "B",
            MotorId::C => "C",
            MotorId::D => "D",
        }
    }
}

impl fmt::Display for MotorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Unit vector on the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionVector(PlanePoint);

impl DirectionVector {
    /// Accepts `v` if it is already unit length (within 1e-6).
    pub fn from_unit(v: PlanePoint) -> Result<Self, GeometryError> {
        let norm = v.norm();
        if (norm - 1.0).abs() > UNIT_TOLERANCE || !norm.is_finite() {
            return Err(GeometryError::NotUnit { norm });
        }
        Ok(Self(v))
    }

    /// Normalizes a nonzero displacement.
    pub fn normalize(v: PlanePoint) -> Option<Self> {
        let norm = v.norm();
        if norm > 0.0 && norm.is_finite() {
            Some(Self(v * (1.0 / norm)))
        } else {
            None
        }
    }

    pub fn vector(self) -> PlanePoint {
        self.0
    }
}

/// Per-tactor unit vectors for the current hand rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorVectors([PlanePoint; 4]);

impl MotorVectors {
    pub fn get(&self, motor: MotorId) -> PlanePoint {
        self.0[motor.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (MotorId, PlanePoint)> + '_ {
        MotorId::ALL.into_iter().map(move |m| (m, self.0[m.index()]))
    }

    pub fn direction(&self, motor: MotorId) -> DirectionVector {
        DirectionVector(self.get(motor))
    }
}

impl Index<MotorId> for MotorVectors {
    type Output = PlanePoint;
    fn index(&self, motor: MotorId) -> &PlanePoint {
        &self.0[motor.index()]
    }
}

/// Motor-to-direction distances, each in `[0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorDistances([f64; 4]);

impl MotorDistances {
    pub fn get(&self, motor: MotorId) -> f64 {
        self.0[motor.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (MotorId, f64)> + '_ {
        MotorId::ALL.into_iter().map(move |m| (m, self.0[m.index()]))
    }
}

impl Index<MotorId> for MotorDistances {
    type Output = f64;
    fn index(&self, motor: MotorId) -> &f64 {
        &self.0[motor.index()]
    }
}

/// Guidance approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    /// Up to two adjacent tactors encode the straight-line direction.
    TwoTactor,
    /// One tactor at a time, along the motor axis best aligned with the target.
    WorstAxis,
}

/// In-plane hand tilt from the wrist-to-hand vector, in `(-pi, pi]`.
pub fn hand_rotation(wrist: PlanePoint, hand: PlanePoint) -> Result<f64, GeometryError> {
    let v = hand - wrist;
    let separation = v.norm();
    if !(separation > MIN_POSE_SEPARATION_CM) {
        return Err(GeometryError::DegeneratePose { separation });
    }
    // atan2(dx, dy): zero straight up, positive toward +x (clockwise on screen).
    let gamma = v.x.atan2(v.y);
    Ok(if gamma == -std::f64::consts::PI { std::f64::consts::PI } else { gamma })
}

pub fn motor_vectors(gamma: f64) -> MotorVectors {
    let (s, c) = gamma.sin_cos();
    let a = PlanePoint::new(s, c);
    let cv = PlanePoint::new(c, -s);
    MotorVectors([a, -a, cv, -cv])
}

/// `||v_m - d||` for every motor, clamped into `[0, 2]` against rounding.
pub fn motor_distances(motors: &MotorVectors, d: DirectionVector) -> Result<MotorDistances, GeometryError> {
    let d = DirectionVector::from_unit(d.vector())?.vector();
    let mut out = [0.0; 4];
    for (m, v) in motors.iter() {
        out[m.index()] = (v - d).norm().clamp(0.0, 2.0);
    }
    Ok(MotorDistances(out))
}

/// Desired movement direction for the current tick.
///
/// Two-tactor guidance points straight at the target. Worst-axis guidance
/// snaps to the motor vector closest to that straight line (argmin of motor
/// distance); ties go to the earlier motor in `A, B, C, D` order.
pub fn select_direction(
    hand: PlanePoint,
    target: PlanePoint,
    approach: Approach,
    motors: &MotorVectors,
) -> Result<DirectionVector, GeometryError> {
    let straight = DirectionVector::normalize(target - hand).ok_or(GeometryError::DegenerateTarget)?;
    match approach {
        Approach::TwoTactor => Ok(straight),
        Approach::WorstAxis => Ok(motors.direction(closest_motor(motors, straight))),
    }
}

/// Motor whose vector is nearest to `v`; first in `MotorId::ALL` order on ties.
pub fn closest_motor(motors: &MotorVectors, v: DirectionVector) -> MotorId {
    let v = v.vector();
    let mut best = MotorId::A;
    let mut best_dist = f64::INFINITY;
    for (m, mv) in motors.iter() {
        let dist = (mv - v).norm();
        if dist < best_dist {
            best = m;
            best_dist = dist;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI, SQRT_2};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn assert_point(p: PlanePoint, x: f64, y: f64, tol: f64) {
        assert!(close(p.x, x, tol) && close(p.y, y, tol), "{p} != ({x}, {y})");
    }

    #[test]
    fn rotation_of_vertical_hand_is_zero() {
        let g = hand_rotation(PlanePoint::new(0.0, 0.0), PlanePoint::new(0.0, 10.0)).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn rotation_clockwise_is_positive() {
        let g = hand_rotation(PlanePoint::ORIGIN, PlanePoint::new(10.0, 0.0)).unwrap();
        assert!(close(g, FRAC_PI_2, 1e-12));
        let g = hand_rotation(PlanePoint::ORIGIN, PlanePoint::new(10.0, 10.0)).unwrap();
        assert!(close(g, FRAC_PI_4, 1e-12));
        let g = hand_rotation(PlanePoint::ORIGIN, PlanePoint::new(-10.0, 0.0)).unwrap();
        assert!(close(g, -FRAC_PI_2, 1e-12));
    }

    #[test]
    fn rotation_pointing_down_is_pi_not_minus_pi() {
        let g = hand_rotation(PlanePoint::ORIGIN, PlanePoint::new(-0.0, -10.0)).unwrap();
        assert_eq!(g, PI);
    }

    #[test]
    fn rotation_rejects_degenerate_pose() {
        let err = hand_rotation(PlanePoint::ORIGIN, PlanePoint::new(0.3, 0.3)).unwrap_err();
        assert!(matches!(err, GeometryError::DegeneratePose { .. }));
        // exactly at the threshold is still degenerate
        assert!(hand_rotation(PlanePoint::ORIGIN, PlanePoint::new(0.5, 0.0)).is_err());
        assert!(hand_rotation(PlanePoint::ORIGIN, PlanePoint::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn motor_vectors_at_reference_angles() {
        let mv = motor_vectors(0.0);
        assert_point(mv[MotorId::A], 0.0, 1.0, 0.0);
        assert_point(mv[MotorId::B], 0.0, -1.0, 0.0);
        assert_point(mv[MotorId::C], 1.0, 0.0, 0.0);
        assert_point(mv[MotorId::D], -1.0, 0.0, 0.0);

        let mv = motor_vectors(FRAC_PI_2);
        assert_point(mv[MotorId::A], 1.0, 0.0, 1e-15);
        assert_point(mv[MotorId::B], -1.0, 0.0, 1e-15);
        assert_point(mv[MotorId::C], 0.0, -1.0, 1e-15);
        assert_point(mv[MotorId::D], 0.0, 1.0, 1e-15);

        let mv = motor_vectors(FRAC_PI_6);
        assert_point(mv[MotorId::A], 0.5, 0.8660, 5e-5);
    }

    #[test]
    fn distances_axis_aligned() {
        let d = DirectionVector::from_unit(PlanePoint::new(1.0, 0.0)).unwrap();
        let md = motor_distances(&motor_vectors(0.0), d).unwrap();
        assert_eq!(md[MotorId::A], SQRT_2);
        assert_eq!(md[MotorId::B], SQRT_2);
        assert_eq!(md[MotorId::C], 0.0);
        assert_eq!(md[MotorId::D], 2.0);
    }

    #[test]
    fn distances_diagonal() {
        let h = SQRT_2 / 2.0;
        let d = DirectionVector::from_unit(PlanePoint::new(h, h)).unwrap();
        let md = motor_distances(&motor_vectors(0.0), d).unwrap();
        // sqrt(2 - 2 cos 45) and sqrt(2 + 2 cos 45)
        let near = (2.0 - 2.0 * FRAC_PI_4.cos()).sqrt();
        let far = (2.0 + 2.0 * FRAC_PI_4.cos()).sqrt();
        assert!(close(near, 0.7654, 5e-5) && close(far, 1.8478, 5e-5));
        for (m, want) in [(MotorId::A, near), (MotorId::C, near), (MotorId::B, far), (MotorId::D, far)] {
            assert!(close(md[m], want, 1e-12), "{m}: {}", md[m]);
        }
    }

    #[test]
    fn distances_rotated_frame() {
        let d = DirectionVector::from_unit(PlanePoint::new(1.0, 0.0)).unwrap();
        let md = motor_distances(&motor_vectors(FRAC_PI_2), d).unwrap();
        assert!(close(md[MotorId::A], 0.0, 1e-12));
        assert!(close(md[MotorId::B], 2.0, 1e-12));
        assert!(close(md[MotorId::C], SQRT_2, 1e-12));
        assert!(close(md[MotorId::D], SQRT_2, 1e-12));
    }

    #[test]
    fn distances_reject_non_unit() {
        let d = DirectionVector(PlanePoint::new(1.1, 0.0));
        let err = motor_distances(&motor_vectors(0.0), d).unwrap_err();
        assert!(matches!(err, GeometryError::NotUnit { .. }));
    }

    #[test]
    fn worst_axis_corrects_dominant_axis() {
        let mv = motor_vectors(0.0);
        let d = select_direction(PlanePoint::ORIGIN, PlanePoint::new(5.0, 1.0), Approach::WorstAxis, &mv).unwrap();
        assert_eq!(d.vector(), mv[MotorId::C]);
        let d = select_direction(PlanePoint::ORIGIN, PlanePoint::new(0.0, -7.0), Approach::WorstAxis, &mv).unwrap();
        assert_eq!(d.vector(), mv[MotorId::B]);
    }

    #[test]
    fn worst_axis_tie_goes_to_first_motor() {
        let mv = motor_vectors(0.0);
        let d = select_direction(PlanePoint::ORIGIN, PlanePoint::new(4.0, 4.0), Approach::WorstAxis, &mv).unwrap();
        assert_eq!(d.vector(), mv[MotorId::A]);
        let d = select_direction(PlanePoint::ORIGIN, PlanePoint::new(-4.0, -4.0), Approach::WorstAxis, &mv).unwrap();
        assert_eq!(d.vector(), mv[MotorId::B]);
    }

    #[test]
    fn two_tactor_normalizes() {
        let mv = motor_vectors(0.3);
        let d = select_direction(PlanePoint::ORIGIN, PlanePoint::new(3.0, 4.0), Approach::TwoTactor, &mv).unwrap();
        assert_point(d.vector(), 0.6, 0.8, 1e-15);
    }

    #[test]
    fn select_rejects_hand_on_target() {
        let p = PlanePoint::new(2.0, 2.0);
        let err = select_direction(p, p, Approach::TwoTactor, &motor_vectors(0.0)).unwrap_err();
        assert_eq!(err, GeometryError::DegenerateTarget);
    }

    #[test]
    fn sanity_bound() {
        assert!(PlanePoint::new(500.0, -500.0).is_sane());
        assert!(!PlanePoint::new(500.1, 0.0).is_sane());
        assert!(!PlanePoint::new(f64::INFINITY, 0.0).is_sane());
    }
}
