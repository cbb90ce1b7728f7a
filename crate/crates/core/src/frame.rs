//! Stereo observations and the text documents they travel in.
//!
//! Two JSON documents cross the boundary between detectors and this crate:
//!
//! * a calibration document holding a [`CalibratedStereoRig`], and
//! * a frame document holding one [`Frame`].
//!
//! Both carry `schema_version = 1`. Parsing reports the offending field for
//! every failure so that an extraction tool can point at its own bug.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stereo::{CalibratedStereoRig, PixelPoint};

pub const SCHEMA_VERSION: u32 = 1;

/// Left/right y difference above which a pose keypoint is reported as
/// inconsistent with rectification. Same value as the matcher's default
/// epipolar tolerance.
pub const DEFAULT_EPIPOLAR_WARNING_PX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },
    #[error("validation error at `{field}`: {message}")]
    Validation { field: String, message: String },
}

impl FrameError {
    fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Name of the offending field.
    pub fn field(&self) -> &str {
        match self {
            Self::Parse { field, .. } | Self::Validation { field, .. } => field,
        }
    }
}

/// Which arm the pose keypoints describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    #[default]
    Right,
    Left,
}

/// One of the three tracked pose landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keypoint {
    Wrist,
    Elbow,
    Shoulder,
}

impl fmt::Display for Keypoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Keypoint::Wrist => "wrist",
            Keypoint::Elbow => "elbow",
            Keypoint::Shoulder => "shoulder",
        })
    }
}

/// Wrist, elbow and shoulder of the pointing arm in one image.
///
/// The shoulder is optional only so that frames can be ingested with the
/// shoulder feasibility filter turned off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub wrist: PixelPoint,
    pub elbow: PixelPoint,
    pub shoulder: Option<PixelPoint>,
}

impl Pose2D {
    pub fn new(wrist: PixelPoint, elbow: PixelPoint, shoulder: PixelPoint) -> Self {
        Self {
            wrist,
            elbow,
            shoulder: Some(shoulder),
        }
    }

    /// Present keypoints in wrist, elbow, shoulder order.
    pub fn keypoints(&self) -> impl Iterator<Item = (Keypoint, PixelPoint)> {
        [
            Some((Keypoint::Wrist, self.wrist)),
            Some((Keypoint::Elbow, self.elbow)),
            self.shoulder.map(|s| (Keypoint::Shoulder, s)),
        ]
        .into_iter()
        .flatten()
    }

    pub fn get(&self, k: Keypoint) -> Option<PixelPoint> {
        match k {
            Keypoint::Wrist => Some(self.wrist),
            Keypoint::Elbow => Some(self.elbow),
            Keypoint::Shoulder => self.shoulder,
        }
    }
}

/// A detected image feature with its descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCandidate {
    pub point: PixelPoint,
    pub descriptor: Vec<f64>,
}

impl FeatureCandidate {
    pub fn new(point: PixelPoint, descriptor: Vec<f64>) -> Self {
        Self { point, descriptor }
    }
}

/// Image dimensions a frame was captured at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub image_width_px: u32,
    pub image_height_px: u32,
}

impl FrameMeta {
    pub fn from_rig(rig: &CalibratedStereoRig) -> Self {
        Self {
            image_width_px: rig.image_width_px,
            image_height_px: rig.image_height_px,
        }
    }

    pub fn width(&self) -> f64 {
        f64::from(self.image_width_px)
    }

    pub fn height(&self) -> f64 {
        f64::from(self.image_height_px)
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.is_finite() && (0.0..=self.width()).contains(&p.x) && (0.0..=self.height()).contains(&p.y)
    }
}

/// One stereo observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: String,
    pub arm: Arm,
    pub meta: FrameMeta,
    pub pose_left: Pose2D,
    pub pose_right: Pose2D,
    pub descriptor_dim: usize,
    pub features_left: Vec<FeatureCandidate>,
    pub features_right: Vec<FeatureCandidate>,
}

/// Ingestion switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOptions {
    /// Reject frames without shoulder keypoints.
    pub require_shoulder: bool,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self {
            require_shoulder: true,
        }
    }
}

impl Frame {
    /// Checks every frame invariant against `meta`.
    pub fn validate(&self, meta: &FrameMeta, opts: &FrameOptions) -> Result<(), FrameError> {
        if self.meta.image_width_px != meta.image_width_px {
            return Err(FrameError::validation(
                "image_width_px",
                format!(
                    "{} does not match {}",
                    self.meta.image_width_px, meta.image_width_px
                ),
            ));
        }
        if self.meta.image_height_px != meta.image_height_px {
            return Err(FrameError::validation(
                "image_height_px",
                format!(
                    "{} does not match {}",
                    self.meta.image_height_px, meta.image_height_px
                ),
            ));
        }
        for (side, pose) in [
            ("pose_left", &self.pose_left),
            ("pose_right", &self.pose_right),
        ] {
            if opts.require_shoulder && pose.shoulder.is_none() {
                return Err(FrameError::validation(
                    format!("{side}.shoulder"),
                    "missing",
                ));
            }
            for (k, p) in pose.keypoints() {
                check_pixel(meta, &p, || format!("{side}.{k}"))?;
            }
        }
        if self.descriptor_dim == 0 {
            return Err(FrameError::validation("descriptor_dim", "must be > 0"));
        }
        for (side, features) in [
            ("features_left", &self.features_left),
            ("features_right", &self.features_right),
        ] {
            for (i, c) in features.iter().enumerate() {
                check_pixel(meta, &c.point, || format!("{side}[{i}]"))?;
                if c.descriptor.len() != self.descriptor_dim {
                    return Err(FrameError::validation(
                        format!("{side}[{i}].desc"),
                        format!(
                            "length {} differs from descriptor_dim {}",
                            c.descriptor.len(),
                            self.descriptor_dim
                        ),
                    ));
                }
                if c.descriptor.iter().any(|v| !v.is_finite()) {
                    return Err(FrameError::validation(
                        format!("{side}[{i}].desc"),
                        "non-finite entry",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Serializes this frame as a frame document.
    pub fn to_document(&self) -> String {
        let doc = FrameDoc {
            schema_version: Some(SCHEMA_VERSION),
            frame_id: Some(self.frame_id.clone()),
            arm: Some(self.arm),
            image_width_px: Some(self.meta.image_width_px),
            image_height_px: Some(self.meta.image_height_px),
            pose_left: Some(PoseDoc::from(&self.pose_left)),
            pose_right: Some(PoseDoc::from(&self.pose_right)),
            descriptor_dim: Some(self.descriptor_dim),
            features_left: Some(self.features_left.iter().map(FeatureDoc::from).collect()),
            features_right: Some(self.features_right.iter().map(FeatureDoc::from).collect()),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("frame documents always serialize");
        s.push('\n');
        s
    }
}

fn check_pixel(
    meta: &FrameMeta,
    p: &PixelPoint,
    field: impl FnOnce() -> String,
) -> Result<(), FrameError> {
    if !meta.contains(p) {
        return Err(FrameError::validation(
            field(),
            format!(
                "({}, {}) outside [0, {}] x [0, {}]",
                p.x, p.y, meta.image_width_px, meta.image_height_px
            ),
        ));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationDoc {
    schema_version: Option<u32>,
    focal_length_px: Option<f64>,
    principal_x_px: Option<f64>,
    principal_y_px: Option<f64>,
    principal_x_right_px: Option<f64>,
    baseline_m: Option<f64>,
    image_width_px: Option<u32>,
    image_height_px: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameDoc {
    schema_version: Option<u32>,
    frame_id: Option<String>,
    arm: Option<Arm>,
    image_width_px: Option<u32>,
    image_height_px: Option<u32>,
    pose_left: Option<PoseDoc>,
    pose_right: Option<PoseDoc>,
    descriptor_dim: Option<usize>,
    features_left: Option<Vec<FeatureDoc>>,
    features_right: Option<Vec<FeatureDoc>>,
}

/// Keypoints are `[x, y]`, optionally followed by a detector confidence,
/// which is accepted and ignored.
#[derive(Debug, Serialize, Deserialize)]
struct PoseDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    wrist: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elbow: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shoulder: Option<Vec<f64>>,
}

impl From<&Pose2D> for PoseDoc {
    fn from(p: &Pose2D) -> Self {
        Self {
            wrist: Some(vec![p.wrist.x, p.wrist.y]),
            elbow: Some(vec![p.elbow.x, p.elbow.y]),
            shoulder: p.shoulder.map(|s| vec![s.x, s.y]),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureDoc {
    x: Option<f64>,
    y: Option<f64>,
    desc: Option<Vec<f64>>,
}

impl From<&FeatureCandidate> for FeatureDoc {
    fn from(c: &FeatureCandidate) -> Self {
        Self {
            x: Some(c.point.x),
            y: Some(c.point.y),
            desc: Some(c.descriptor.clone()),
        }
    }
}

fn required<T>(value: Option<T>, field: &str) -> Result<T, FrameError> {
    value.ok_or_else(|| FrameError::parse(field, "missing"))
}

fn check_version(version: Option<u32>) -> Result<(), FrameError> {
    let v = required(version, "schema_version")?;
    if v != SCHEMA_VERSION {
        return Err(FrameError::parse(
            "schema_version",
            format!("unsupported version {v}"),
        ));
    }
    Ok(())
}

fn decode<T: for<'de> Deserialize<'de>>(document: &str) -> Result<T, FrameError> {
    serde_json::from_str(document).map_err(|e| FrameError::parse("document", e.to_string()))
}

/// Parses and validates a calibration document.
pub fn parse_calibration(document: &str) -> Result<CalibratedStereoRig, FrameError> {
    let doc: CalibrationDoc = decode(document)?;
    check_version(doc.schema_version)?;
    let rig = CalibratedStereoRig {
        focal_length_px: required(doc.focal_length_px, "focal_length_px")?,
        principal_x_px: required(doc.principal_x_px, "principal_x_px")?,
        principal_y_px: required(doc.principal_y_px, "principal_y_px")?,
        principal_x_right_px: required(doc.principal_x_right_px, "principal_x_right_px")?,
        baseline_m: required(doc.baseline_m, "baseline_m")?,
        image_width_px: required(doc.image_width_px, "image_width_px")?,
        image_height_px: required(doc.image_height_px, "image_height_px")?,
    };
    rig.validate()
        .map_err(|e| FrameError::validation(e.field, e.reason))?;
    Ok(rig)
}

/// Serializes a rig as a calibration document.
pub fn calibration_to_document(rig: &CalibratedStereoRig) -> String {
    let doc = CalibrationDoc {
        schema_version: Some(SCHEMA_VERSION),
        focal_length_px: Some(rig.focal_length_px),
        principal_x_px: Some(rig.principal_x_px),
        principal_y_px: Some(rig.principal_y_px),
        principal_x_right_px: Some(rig.principal_x_right_px),
        baseline_m: Some(rig.baseline_m),
        image_width_px: Some(rig.image_width_px),
        image_height_px: Some(rig.image_height_px),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("calibration documents always serialize");
    s.push('\n');
    s
}

/// Parses a frame document, requiring all three keypoints in both images.
pub fn parse_frame(document: &str, meta: &FrameMeta) -> Result<Frame, FrameError> {
    parse_frame_with(document, meta, &FrameOptions::default())
}

pub fn parse_frame_with(
    document: &str,
    meta: &FrameMeta,
    opts: &FrameOptions,
) -> Result<Frame, FrameError> {
    let doc: FrameDoc = decode(document)?;
    check_version(doc.schema_version)?;
    let frame_id = required(doc.frame_id, "frame_id")?;
    let frame_meta = FrameMeta {
        image_width_px: required(doc.image_width_px, "image_width_px")?,
        image_height_px: required(doc.image_height_px, "image_height_px")?,
    };
    let pose_left = decode_pose(doc.pose_left, "pose_left")?;
    let pose_right = decode_pose(doc.pose_right, "pose_right")?;
    let descriptor_dim = required(doc.descriptor_dim, "descriptor_dim")?;
    let features_left = decode_features(doc.features_left, "features_left")?;
    let features_right = decode_features(doc.features_right, "features_right")?;
    let frame = Frame {
        frame_id,
        arm: doc.arm.unwrap_or_default(),
        meta: frame_meta,
        pose_left,
        pose_right,
        descriptor_dim,
        features_left,
        features_right,
    };
    frame.validate(meta, opts)?;
    Ok(frame)
}

fn decode_keypoint(
    value: Option<Vec<f64>>,
    field: String,
) -> Result<Option<PixelPoint>, FrameError> {
    match value {
        None => Ok(None),
        Some(v) if v.len() == 2 || v.len() == 3 => Ok(Some(PixelPoint::new(v[0], v[1]))),
        Some(v) => Err(FrameError::parse(
            field,
            format!(
                "expected [x, y] or [x, y, confidence], got {} values",
                v.len()
            ),
        )),
    }
}

fn decode_pose(doc: Option<PoseDoc>, side: &str) -> Result<Pose2D, FrameError> {
    // A missing pose means the detector found no person in that image.
    let doc = doc.ok_or_else(|| FrameError::validation(side, "pose not detected"))?;
    let wrist = decode_keypoint(doc.wrist, format!("{side}.wrist"))?
        .ok_or_else(|| FrameError::validation(format!("{side}.wrist"), "missing"))?;
    let elbow = decode_keypoint(doc.elbow, format!("{side}.elbow"))?
        .ok_or_else(|| FrameError::validation(format!("{side}.elbow"), "missing"))?;
    let shoulder = decode_keypoint(doc.shoulder, format!("{side}.shoulder"))?;
    Ok(Pose2D {
        wrist,
        elbow,
        shoulder,
    })
}

fn decode_features(
    doc: Option<Vec<FeatureDoc>>,
    side: &str,
) -> Result<Vec<FeatureCandidate>, FrameError> {
    required(doc, side)?
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(FeatureCandidate {
                point: PixelPoint::new(
                    required(f.x, &format!("{side}[{i}].x"))?,
                    required(f.y, &format!("{side}[{i}].y"))?,
                ),
                descriptor: required(f.desc, &format!("{side}[{i}].desc"))?,
            })
        })
        .collect()
}

/// Non-fatal observations about a frame.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameWarning {
    /// Frame dimensions differ from the rig's.
    SizeMismatch,
    /// A pose keypoint's y differs between the images by more than the
    /// tolerance, which points at bad rectification or a detector slip.
    EpipolarInconsistency { keypoint: Keypoint, dy_px: f64 },
    /// A pose keypoint has non-positive disparity and cannot be triangulated.
    NonPositiveDisparity {
        keypoint: Keypoint,
        disparity_px: f64,
    },
    /// One or both feature lists are empty.
    NoCandidates,
}

impl fmt::Display for FrameWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameWarning::SizeMismatch => f.write_str("frame size differs from calibration"),
            FrameWarning::EpipolarInconsistency { keypoint, .. } => {
                write!(f, "epipolar inconsistency: {keypoint}")
            }
            FrameWarning::NonPositiveDisparity { keypoint, .. } => {
                write!(f, "non-positive disparity: {keypoint}")
            }
            FrameWarning::NoCandidates => f.write_str("no candidates"),
        }
    }
}

/// Advisories for a parsed frame; never fails.
pub fn validate_frame(frame: &Frame, rig: &CalibratedStereoRig) -> Vec<FrameWarning> {
    validate_frame_with_tolerance(frame, rig, DEFAULT_EPIPOLAR_WARNING_PX)
}

pub fn validate_frame_with_tolerance(
    frame: &Frame,
    rig: &CalibratedStereoRig,
    epipolar_tolerance_px: f64,
) -> Vec<FrameWarning> {
    let mut warnings = Vec::new();
    if frame.meta != FrameMeta::from_rig(rig) {
        warnings.push(FrameWarning::SizeMismatch);
    }
    for (k, left) in frame.pose_left.keypoints() {
        let Some(right) = frame.pose_right.get(k) else {
            continue;
        };
        let dy = (left.y - right.y).abs();
        if dy > epipolar_tolerance_px {
            warnings.push(FrameWarning::EpipolarInconsistency {
                keypoint: k,
                dy_px: dy,
            });
        }
        let d = left.x - right.x;
        if d <= 0.0 {
            warnings.push(FrameWarning::NonPositiveDisparity {
                keypoint: k,
                disparity_px: d,
            });
        }
    }
    if frame.features_left.is_empty() || frame.features_right.is_empty() {
        warnings.push(FrameWarning::NoCandidates);
    }
    warnings
}
