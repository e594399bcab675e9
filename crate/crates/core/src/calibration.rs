//! Board calibration and target placement.
//!
//! The camera sees the target circle as an axis-aligned ellipse whose top and
//! right landmarks may be skewed off the nominal 0 and 90 degree directions.
//! Calibration captures the top, right and center landmarks (plus the bottom
//! and left ones for a residual check), reduces each to its coordinate-wise
//! median, and derives:
//!
//! * `alpha`, `beta`: signed angles of the top and right points from vertical,
//! * `d_top`, `d_right`: their distances from the center.
//!
//! A nominal target angle `theta` is remapped affinely so that 0..90 spans
//! `alpha..beta`, then placed at `center + (d_right sin theta', d_top cos theta')`.
//! The same affine map is used beyond 90 degrees.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PlanePoint;

pub const MIN_CAPTURE_SAMPLES: usize = 10;
pub const MIN_AXIS_CM: f64 = 5.0;
pub const MAX_TARGET_ANGLE_DEG: f64 = 150.0;
pub const MIN_TARGET_GAP_DEG: f64 = 60.0;
pub const DEFAULT_ATTAIN_RADIUS_CM: f64 = 3.5;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("{landmark}: need at least {needed} samples, got {got}")]
    TooFewSamples { landmark: &'static str, needed: usize, got: usize },
    #[error("capture sample {0} is not a finite desk-scale point")]
    BadSample(PlanePoint),
    #[error("degenerate rig: {0}")]
    DegenerateRig(String),
    #[error("target angle {0} deg is outside [0, 150]")]
    OutOfRangeAngle(f64),
    #[error("calibration file: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration file: {0}")]
    Parse(String),
}

/// Median of a non-empty slice; mean of the two central values for even counts.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Coordinate-wise median of the raw samples of one landmark.
pub fn reduce_capture(samples: &[PlanePoint]) -> Result<PlanePoint, CalibrationError> {
    if samples.len() < 2 {
        return Err(CalibrationError::TooFewSamples { landmark: "capture", needed: 2, got: samples.len() });
    }
    if let Some(bad) = samples.iter().find(|p| !p.is_sane()) {
        return Err(CalibrationError::BadSample(*bad));
    }
    let mut xs: Vec<f64> = samples.iter().map(|p| p.x).collect();
    let mut ys: Vec<f64> = samples.iter().map(|p| p.y).collect();
    Ok(PlanePoint::new(median(&mut xs), median(&mut ys)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Landmark {
    Deg0,
    Deg90,
    Deg180,
    Deg270,
    Center,
}

impl Landmark {
    pub const ALL: [Landmark; 5] =
        [Landmark::Deg0, Landmark::Deg90, Landmark::Deg180, Landmark::Deg270, Landmark::Center];

    pub fn as_str(self) -> &'static str {
        match self {
            Landmark::Deg0 => "deg0",
            Landmark::Deg90 => "deg90",
            Landmark::Deg180 => "deg180",
            Landmark::Deg270 => "deg270",
            Landmark::Center => "center",
        }
    }

    pub fn parse(s: &str) -> Option<Landmark> {
        Landmark::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

/// Raw samples per landmark, nominally 10 at 2 Hz over five seconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaptureSet {
    pub deg0: Vec<PlanePoint>,
    pub deg90: Vec<PlanePoint>,
    pub deg180: Vec<PlanePoint>,
    pub deg270: Vec<PlanePoint>,
    pub center: Vec<PlanePoint>,
}

impl CaptureSet {
    pub fn samples_mut(&mut self, landmark: Landmark) -> &mut Vec<PlanePoint> {
        match landmark {
            Landmark::Deg0 => &mut self.deg0,
            Landmark::Deg90 => &mut self.deg90,
            Landmark::Deg180 => &mut self.deg180,
            Landmark::Deg270 => &mut self.deg270,
            Landmark::Center => &mut self.center,
        }
    }

    pub fn samples(&self, landmark: Landmark) -> &[PlanePoint] {
        match landmark {
            Landmark::Deg0 => &self.deg0,
            Landmark::Deg90 => &self.deg90,
            Landmark::Deg180 => &self.deg180,
            Landmark::Deg270 => &self.deg270,
            Landmark::Center => &self.center,
        }
    }

    /// Parses `landmark,x,y` lines (blank lines and `#` comments ignored).
    pub fn parse_csv(text: &str) -> Result<CaptureSet, CalibrationError> {
        let mut set = CaptureSet::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() == 3 && lineno == 0 && fields[1] == "x" {
                continue;
            }
            let bad = || CalibrationError::Parse(format!("line {}: expected `landmark,x,y`, got `{line}`", lineno + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let landmark = Landmark::parse(fields[0]).ok_or_else(bad)?;
            let x: f64 = fields[1].parse().map_err(|_| bad())?;
            let y: f64 = fields[2].parse().map_err(|_| bad())?;
            set.samples_mut(landmark).push(PlanePoint::new(x, y));
        }
        Ok(set)
    }
}

/// Signed angle of `v` from the vertical axis, positive toward +x.
fn angle_from_vertical(v: PlanePoint) -> f64 {
    v.x.atan2(v.y)
}

/// The two-parameter skew plus ellipse model of the board.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationData {
    pub center: PlanePoint,
    /// Angle of the captured top point from vertical (radians).
    pub alpha: f64,
    /// Angle of the captured right point from vertical (radians).
    pub beta: f64,
    pub d_top: f64,
    pub d_right: f64,
}

impl CalibrationData {
    /// An undistorted circle of `radius` around `center`.
    pub fn identity(center: PlanePoint, radius: f64) -> Self {
        Self { center, alpha: 0.0, beta: std::f64::consts::FRAC_PI_2, d_top: radius, d_right: radius }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        let fail = |m: String| Err(CalibrationError::DegenerateRig(m));
        if !self.center.is_sane() {
            return fail(format!("center {} is not a desk-scale point", self.center));
        }
        if !(self.d_top >= MIN_AXIS_CM) || !(self.d_right >= MIN_AXIS_CM) {
            return fail(format!(
                "axes must be at least {MIN_AXIS_CM} cm (d_top={}, d_right={})",
                self.d_top, self.d_right
            ));
        }
        if !(self.alpha < self.beta) {
            return fail(format!("alpha {} must be below beta {}", self.alpha.to_degrees(), self.beta.to_degrees()));
        }
        if !(self.alpha.abs() < FRAC_PI_4) || !((self.beta - FRAC_PI_2).abs() < FRAC_PI_4) {
            return fail(format!(
                "skew too large (alpha={:.2} deg, beta={:.2} deg)",
                self.alpha.to_degrees(),
                self.beta.to_degrees()
            ));
        }
        Ok(())
    }

    /// Corrected angle (degrees) for a nominal target angle (degrees).
    pub fn corrected_angle_deg(&self, theta_deg: f64) -> f64 {
        let (alpha, beta) = (self.alpha.to_degrees(), self.beta.to_degrees());
        theta_deg * (beta - alpha) / 90.0 + alpha
    }

    /// Ellipse point for a corrected angle in radians, without range checks.
    pub fn ellipse_point(&self, corrected: f64) -> PlanePoint {
        let (s, c) = corrected.sin_cos();
        self.center + PlanePoint::new(self.d_right * s, self.d_top * c)
    }

    fn corrected_angle(&self, theta_deg: f64) -> f64 {
        theta_deg.to_radians() * (self.beta - self.alpha) / std::f64::consts::FRAC_PI_2 + self.alpha
    }

    /// Whether `p` satisfies the ellipse equation within `tol` cm (radially).
    pub fn on_ellipse(&self, p: PlanePoint, tol: f64) -> bool {
        let q = p - self.center;
        let r = ((q.x / self.d_right).powi(2) + (q.y / self.d_top).powi(2)).sqrt();
        let scale = self.d_top.max(self.d_right);
        ((r - 1.0) * scale).abs() <= tol
    }

    pub fn to_file(&self) -> CalibrationFile {
        CalibrationFile {
            center: [self.center.x, self.center.y],
            alpha_deg: self.alpha.to_degrees(),
            beta_deg: self.beta.to_degrees(),
            d_top_cm: self.d_top,
            d_right_cm: self.d_right,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        fs::write(path, self.to_file().to_toml())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        CalibrationFile::from_toml(&fs::read_to_string(path)?)?.into_data()
    }
}

/// On-disk key-value form of [`CalibrationData`], angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub center: [f64; 2],
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub d_top_cm: f64,
    pub d_right_cm: f64,
}

impl CalibrationFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration fields always serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, CalibrationError> {
        toml::from_str(text).map_err(|e| CalibrationError::Parse(e.to_string()))
    }

    pub fn into_data(self) -> Result<CalibrationData, CalibrationError> {
        let data = CalibrationData {
            center: PlanePoint::new(self.center[0], self.center[1]),
            alpha: self.alpha_deg.to_radians(),
            beta: self.beta_deg.to_radians(),
            d_top: self.d_top_cm,
            d_right: self.d_right_cm,
        };
        data.validate()?;
        Ok(data)
    }
}

/// Predicted-vs-captured distances for the landmarks the model does not use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub deg180_residual: Option<f64>,
    pub deg270_residual: Option<f64>,
}

/// Fits the board model from a capture set.
pub fn build_calibration(captures: &CaptureSet) -> Result<CalibrationData, CalibrationError> {
    for landmark in [Landmark::Deg0, Landmark::Deg90, Landmark::Center] {
        let got = captures.samples(landmark).len();
        if got < MIN_CAPTURE_SAMPLES {
            return Err(CalibrationError::TooFewSamples {
                landmark: landmark.as_str(),
                needed: MIN_CAPTURE_SAMPLES,
                got,
            });
        }
    }
    let center = reduce_capture(&captures.center)?;
    let top = reduce_capture(&captures.deg0)? - center;
    let right = reduce_capture(&captures.deg90)? - center;
    let data = CalibrationData {
        center,
        alpha: angle_from_vertical(top),
        beta: angle_from_vertical(right),
        d_top: top.norm(),
        d_right: right.norm(),
    };
    data.validate()?;
    Ok(data)
}

/// Residuals of the bottom and left landmarks against the fitted model.
pub fn validate_captures(captures: &CaptureSet, cal: &CalibrationData) -> ValidationReport {
    let residual = |samples: &[PlanePoint], theta_deg: f64| {
        if samples.len() < 2 {
            return None;
        }
        let captured = reduce_capture(samples).ok()?;
        Some(cal.ellipse_point(cal.corrected_angle(theta_deg)).distance(captured))
    };
    ValidationReport {
        deg180_residual: residual(&captures.deg180, 180.0),
        deg270_residual: residual(&captures.deg270, 270.0),
    }
}

/// A target placed on the calibrated ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub nominal_angle_deg: f64,
    pub corrected_angle_deg: f64,
    pub position: PlanePoint,
    pub attain_radius: f64,
}

pub fn place_target(theta_deg: f64, cal: &CalibrationData) -> Result<TargetSpec, CalibrationError> {
    if !(0.0..=MAX_TARGET_ANGLE_DEG).contains(&theta_deg) {
        return Err(CalibrationError::OutOfRangeAngle(theta_deg));
    }
    Ok(TargetSpec {
        nominal_angle_deg: theta_deg,
        corrected_angle_deg: cal.corrected_angle_deg(theta_deg),
        position: cal.ellipse_point(cal.corrected_angle(theta_deg)),
        attain_radius: DEFAULT_ATTAIN_RADIUS_CM,
    })
}

/// Draws the next nominal target angle, uniform over `[0, 150]` minus the
/// 60 degree band around the previous angle.
pub fn next_target_angle<R: Rng + ?Sized>(prev: Option<f64>, rng: &mut R) -> f64 {
    loop {
        let theta = rng.random_range(0.0..=MAX_TARGET_ANGLE_DEG);
        match prev {
            Some(p) if (theta - p).abs() < MIN_TARGET_GAP_DEG => continue,
            _ => return theta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn captures(top: PlanePoint, right: PlanePoint, center: PlanePoint) -> CaptureSet {
        CaptureSet { deg0: vec![top; 10], deg90: vec![right; 10], center: vec![center; 10], ..Default::default() }
    }

    #[test]
    fn median_of_constant_samples() {
        let p = reduce_capture(&[PlanePoint::new(1.0, 2.0); 10]).unwrap();
        assert_eq!(p, PlanePoint::new(1.0, 2.0));
    }

    #[test]
    fn median_ignores_a_spike() {
        let mut s = vec![PlanePoint::ORIGIN; 9];
        s.push(PlanePoint::new(100.0, 0.0));
        assert_eq!(reduce_capture(&s).unwrap().x, 0.0);
    }

    #[test]
    fn median_odd_count() {
        let s = [PlanePoint::new(0.0, 0.0), PlanePoint::new(2.0, 2.0), PlanePoint::new(4.0, 0.0)];
        assert_eq!(reduce_capture(&s).unwrap(), PlanePoint::new(2.0, 0.0));
    }

    #[test]
    fn median_needs_two_samples() {
        assert!(matches!(reduce_capture(&[PlanePoint::ORIGIN]), Err(CalibrationError::TooFewSamples { got: 1, .. })));
    }

    #[test]
    fn ideal_rig() {
        let cal =
            build_calibration(&captures(PlanePoint::new(0.0, 35.0), PlanePoint::new(35.0, 0.0), PlanePoint::ORIGIN))
                .unwrap();
        assert_eq!(cal.alpha, 0.0);
        assert!(close(cal.beta.to_degrees(), 90.0, 1e-12));
        assert_eq!((cal.d_top, cal.d_right), (35.0, 35.0));
    }

    #[test]
    fn skewed_rig() {
        let top = PlanePoint::new(35.0 * 5f64.to_radians().sin(), 35.0 * 5f64.to_radians().cos());
        let right = PlanePoint::new(35.0 * 85f64.to_radians().sin(), 35.0 * 85f64.to_radians().cos());
        let cal = build_calibration(&captures(top, right, PlanePoint::ORIGIN)).unwrap();
        assert!(close(cal.alpha.to_degrees(), 5.0, 1e-9));
        assert!(close(cal.beta.to_degrees(), 85.0, 1e-9));
        assert!(close(cal.d_top, 35.0, 1e-9) && close(cal.d_right, 35.0, 1e-9));
    }

    #[test]
    fn foreshortened_rig() {
        let cal =
            build_calibration(&captures(PlanePoint::new(0.0, 28.0), PlanePoint::new(35.0, 0.0), PlanePoint::ORIGIN))
                .unwrap();
        assert_eq!((cal.d_top, cal.d_right), (28.0, 35.0));
        assert_eq!(cal.alpha, 0.0);
    }

    #[test]
    fn degenerate_rigs() {
        let short =
            build_calibration(&captures(PlanePoint::new(0.0, 4.0), PlanePoint::new(35.0, 0.0), PlanePoint::ORIGIN));
        assert!(matches!(short, Err(CalibrationError::DegenerateRig(_))));
        // top and right swapped: alpha > beta
        let swapped =
            build_calibration(&captures(PlanePoint::new(35.0, 0.0), PlanePoint::new(0.0, 35.0), PlanePoint::ORIGIN));
        assert!(matches!(swapped, Err(CalibrationError::DegenerateRig(_))));
        let mut few = captures(PlanePoint::new(0.0, 35.0), PlanePoint::new(35.0, 0.0), PlanePoint::ORIGIN);
        few.center.truncate(9);
        assert!(matches!(build_calibration(&few), Err(CalibrationError::TooFewSamples { landmark: "center", .. })));
    }

    #[test]
    fn place_on_ideal_rig() {
        let cal = CalibrationData::identity(PlanePoint::ORIGIN, 35.0);
        let t = place_target(0.0, &cal).unwrap();
        assert!(close(t.position.x, 0.0, 1e-12) && close(t.position.y, 35.0, 1e-12));
        let t = place_target(30.0, &cal).unwrap();
        assert!(close(t.position.x, 17.5, 5e-5) && close(t.position.y, 30.3109, 5e-5));
        assert_eq!(t.attain_radius, 3.5);
    }

    #[test]
    fn place_on_skewed_rig() {
        let cal = CalibrationData {
            center: PlanePoint::ORIGIN,
            alpha: 5f64.to_radians(),
            beta: 85f64.to_radians(),
            d_top: 35.0,
            d_right: 35.0,
        };
        let t = place_target(90.0, &cal).unwrap();
        assert!(close(t.corrected_angle_deg, 85.0, 1e-9));
        assert!(close(t.position.x, 34.8668, 5e-5), "{}", t.position);
        assert!(close(t.position.y, 3.0505, 5e-5), "{}", t.position);
        assert!(cal.on_ellipse(t.position, 1e-6));
    }

    #[test]
    fn place_out_of_range() {
        let cal = CalibrationData::identity(PlanePoint::ORIGIN, 35.0);
        assert!(matches!(place_target(150.5, &cal), Err(CalibrationError::OutOfRangeAngle(_))));
        assert!(matches!(place_target(-1.0, &cal), Err(CalibrationError::OutOfRangeAngle(_))));
        assert!(place_target(150.0, &cal).is_ok());
    }

    #[test]
    fn next_angle_respects_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let t = next_target_angle(Some(0.0), &mut rng);
            assert!((60.0..=150.0).contains(&t));
            let t = next_target_angle(Some(75.0), &mut rng);
            assert!(t <= 15.0 || t >= 135.0, "{t}");
            let t = next_target_angle(Some(150.0), &mut rng);
            assert!((0.0..=90.0).contains(&t));
            let t = next_target_angle(None, &mut rng);
            assert!((0.0..=150.0).contains(&t));
        }
    }

    #[test]
    fn file_round_trip() {
        let cal = CalibrationData {
            center: PlanePoint::new(1.5, -2.0),
            alpha: 3f64.to_radians(),
            beta: 88f64.to_radians(),
            d_top: 30.0,
            d_right: 36.0,
        };
        let text = cal.to_file().to_toml();
        assert!(text.contains("alpha_deg") && text.contains("d_right_cm"));
        let back = CalibrationFile::from_toml(&text).unwrap().into_data().unwrap();
        assert!(close(back.alpha, cal.alpha, 1e-15) && close(back.beta, cal.beta, 1e-15));
        assert_eq!((back.center, back.d_top, back.d_right), (cal.center, cal.d_top, cal.d_right));
        assert!(CalibrationFile::from_toml("center = [0, 0]\n").is_err());
    }

    #[test]
    fn capture_csv() {
        let text = "landmark,x,y\n# comment\ncenter,0,0\ndeg0, 0.5, 35\n";
        let set = CaptureSet::parse_csv(text).unwrap();
        assert_eq!(set.center, vec![PlanePoint::ORIGIN]);
        assert_eq!(set.deg0, vec![PlanePoint::new(0.5, 35.0)]);
        assert!(CaptureSet::parse_csv("elbow,1,2").is_err());
        assert!(CaptureSet::parse_csv("center,1").is_err());
    }

    #[test]
    fn residuals_for_ideal_rig() {
        let mut set = captures(PlanePoint::new(0.0, 35.0), PlanePoint::new(35.0, 0.0), PlanePoint::ORIGIN);
        set.deg180 = vec![PlanePoint::new(0.0, -35.0); 10];
        set.deg270 = vec![PlanePoint::new(-34.0, 0.0); 10];
        let cal = build_calibration(&set).unwrap();
        let report = validate_captures(&set, &cal);
        assert!(report.deg180_residual.unwrap() < 1e-9);
        assert!(close(report.deg270_residual.unwrap(), 1.0, 1e-9));
    }
}
