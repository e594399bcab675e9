//! Per-trial trajectory metrics.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::geometry::PlanePoint;
use crate::session::TrialRecord;

/// Disk centered midway between the board center and the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalRegion {
    pub center: PlanePoint,
    pub radius: f64,
}

impl CriticalRegion {
    pub fn between(origin: PlanePoint, target: PlanePoint, radius: f64) -> Self {
        Self { center: origin.midpoint(target), radius }
    }

    pub fn contains(&self, p: PlanePoint) -> bool {
        p.distance(self.center) <= self.radius
    }
}

/// Valid hand positions of one trial in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PlanePoint>,
    pub origin: PlanePoint,
    pub target: PlanePoint,
    /// Samples dropped because the tracker flagged them invalid.
    pub excluded: usize,
}

impl Trajectory {
    pub fn from_record(record: &TrialRecord) -> Self {
        let valid: Vec<_> = record.samples.iter().filter(|s| s.valid).collect();
        Self {
            times: valid.iter().map(|s| s.t).collect(),
            points: valid.iter().map(|s| s.hand).collect(),
            origin: record.center,
            target: record.plan.target.position,
            excluded: record.samples.len() - valid.len(),
        }
    }
}

/// Total polyline length.
pub fn path_length(points: &[PlanePoint]) -> Result<f64, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::TooFewSamples(points.len()));
    }
    Ok(points.windows(2).map(|w| w[0].distance(w[1])).sum())
}

/// Length of the part of segment `a -> b` inside the closed disk.
pub fn segment_length_inside(a: PlanePoint, b: PlanePoint, region: &CriticalRegion) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return 0.0;
    }
    // |f + s d|^2 = r^2 for s in [0, 1]
    let f = a - region.center;
    let half_b = f.dot(d);
    let c = f.dot(f) - region.radius * region.radius;
    let disc = half_b * half_b - len2 * c;
    if disc <= 0.0 {
        return 0.0;
    }
    let root = disc.sqrt();
    // Stable pair of roots.
    let q = -(half_b + half_b.signum() * root);
    let (mut s0, mut s1) = if q == 0.0 { (-root / len2, root / len2) } else { (q / len2, c / q) };
    if s0 > s1 {
        std::mem::swap(&mut s0, &mut s1);
    }
    let lo = s0.max(0.0);
    let hi = s1.min(1.0);
    if hi <= lo {
        0.0
    } else {
        (hi - lo) * len2.sqrt()
    }
}

/// Percentage of path length inside the region.
pub fn pct_in_critical(points: &[PlanePoint], region: &CriticalRegion) -> Result<f64, AnalysisError> {
    let total = path_length(points)?;
    if !(total > 0.0) {
        return Err(AnalysisError::ZeroLengthPath);
    }
    let inside: f64 = points.windows(2).map(|w| segment_length_inside(w[0], w[1], region)).sum();
    Ok((100.0 * inside / total).clamp(0.0, 100.0))
}

/// The three dependent variables of one trial. Undefined values are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub completion_time: Option<f64>,
    pub path_length: Option<f64>,
    pub pct_in_critical: Option<f64>,
    pub excluded_samples: usize,
}

pub fn trial_metrics(record: &TrialRecord, critical_radius: f64) -> TrialMetrics {
    let traj = Trajectory::from_record(record);
    let region = CriticalRegion::between(traj.origin, traj.target, critical_radius);
    TrialMetrics {
        completion_time: record.completion_time,
        path_length: path_length(&traj.points).ok(),
        pct_in_critical: pct_in_critical(&traj.points, &region).ok(),
        excluded_samples: traj.excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<PlanePoint> {
        v.iter().map(|&(x, y)| PlanePoint::new(x, y)).collect()
    }

    #[test]
    fn lengths() {
        assert_eq!(path_length(&pts(&[(0.0, 0.0), (3.0, 4.0)])).unwrap(), 5.0);
        let square = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]);
        assert_eq!(path_length(&square).unwrap(), 4.0);
        assert_eq!(path_length(&pts(&[(0.0, 0.0), (0.0, 35.0)])).unwrap(), 35.0);
        assert!(matches!(path_length(&pts(&[(1.0, 1.0)])), Err(AnalysisError::TooFewSamples(1))));
    }

    #[test]
    fn straight_path_is_fully_critical() {
        let target = PlanePoint::new(0.0, 35.0);
        let region = CriticalRegion::between(PlanePoint::ORIGIN, target, 21.0);
        let p = pct_in_critical(&[PlanePoint::ORIGIN, target], &region).unwrap();
        assert_eq!(p, 100.0);
    }

    #[test]
    fn outside_path_is_zero() {
        let region = CriticalRegion { center: PlanePoint::ORIGIN, radius: 5.0 };
        let p = pct_in_critical(&pts(&[(10.0, 10.0), (20.0, 10.0), (20.0, -30.0)]), &region).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn chord_through_center() {
        let region = CriticalRegion { center: PlanePoint::ORIGIN, radius: 1.0 };
        let p = pct_in_critical(&pts(&[(-2.0, 0.0), (2.0, 0.0)]), &region).unwrap();
        assert!((p - 50.0).abs() < 1e-12);
        // tangent line contributes nothing
        assert_eq!(segment_length_inside(PlanePoint::new(-2.0, 1.0), PlanePoint::new(2.0, 1.0), &region), 0.0);
    }

    #[test]
    fn zero_length_path() {
        let region = CriticalRegion { center: PlanePoint::ORIGIN, radius: 1.0 };
        let p = pct_in_critical(&pts(&[(0.0, 0.0), (0.0, 0.0)]), &region);
        assert!(matches!(p, Err(AnalysisError::ZeroLengthPath)));
    }
}
