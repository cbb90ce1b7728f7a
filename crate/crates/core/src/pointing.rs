//! Pointing target resolution.
//!
//! The pose keypoints and the matched candidates are triangulated
//! independently; the elbow→wrist ray is extended past the wrist and the
//! candidate with the smallest perpendicular distance to that line wins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{
    compute_mask, filter_candidates, match_stereo, CandidateError, MaskConfig, MatchConfig,
    MatchedCandidate,
};
use crate::frame::{validate_frame_with_tolerance, Frame, Keypoint};
use crate::stereo::{triangulate, CalibratedStereoRig, CameraPoint3D, PixelPoint};

/// Below this wrist–elbow separation the pointing direction is undefined.
pub const MIN_FOREARM_LENGTH_M: f64 = 1e-6;
/// Below this wrist–extension separation the pointing line is undefined.
pub const MIN_LINE_LENGTH_M: f64 = 1e-9;
/// Distances closer than this are treated as tied.
pub const TIE_EPSILON_M: f64 = 1e-9;

/// Observed mean wrist–elbow depth gap in the original pool recordings.
pub const TYPICAL_WRIST_ELBOW_GAP_M: f64 = 0.254;
/// Observed mean elbow–shoulder depth gap in the original pool recordings.
pub const TYPICAL_ELBOW_SHOULDER_GAP_M: f64 = 0.377;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PointingError {
    #[error("{keypoint} has invalid disparity {disparity_px} px")]
    PoseRejected {
        keypoint: Keypoint,
        disparity_px: f64,
    },
    #[error("shoulder keypoint missing while the shoulder filter is enabled")]
    MissingShoulder,
    #[error("{near}-{far} depth gap {gap_m:.3} m exceeds {max_m} m")]
    InfeasiblePose {
        near: Keypoint,
        far: Keypoint,
        gap_m: f64,
        max_m: f64,
    },
    #[error("degenerate pointing line (length {length_m:e} m)")]
    DegeneratePointing { length_m: f64 },
    #[error("no candidate objects")]
    NoCandidates,
}

impl PointingError {
    /// Short machine-readable name.
    pub fn name(&self) -> &'static str {
        match self {
            Self::PoseRejected { .. } => "PoseRejected",
            Self::MissingShoulder => "MissingShoulder",
            Self::InfeasiblePose { .. } => "InfeasiblePose",
            Self::DegeneratePointing { .. } => "DegeneratePointing",
            Self::NoCandidates => "NoCandidates",
        }
    }
}

/// How to choose among candidates whose distances tie within [`TIE_EPSILON_M`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Smallest depth, then lowest index.
    #[default]
    ClosestZ,
    LowestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointingConfig {
    /// Extension length as a multiple of the forearm vector.
    pub scale_factor: f64,
    /// Largest admissible wrist–elbow and elbow–shoulder depth gap.
    pub z_gap_max: f64,
    pub tie_break: TieBreak,
    /// Require the shoulder and check the elbow–shoulder gap.
    pub shoulder_filter: bool,
}

impl Default for PointingConfig {
    fn default() -> Self {
        Self {
            scale_factor: 3.0,
            z_gap_max: 0.5,
            tie_break: TieBreak::ClosestZ,
            shoulder_filter: true,
        }
    }
}

impl PointingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.scale_factor > 0.0) || !self.scale_factor.is_finite() {
            return Err(format!(
                "pointing.scale_factor must be > 0, got {}",
                self.scale_factor
            ));
        }
        if !(self.z_gap_max > 0.0) || !self.z_gap_max.is_finite() {
            return Err(format!(
                "pointing.z_gap_max must be > 0, got {}",
                self.z_gap_max
            ));
        }
        Ok(())
    }
}

/// Every threshold `resolve` depends on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolveConfig {
    pub mask: MaskConfig,
    pub matching: MatchConfig,
    pub pointing: PointingConfig,
}

impl ResolveConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.mask.validate()?;
        self.matching.validate()?;
        self.pointing.validate()
    }
}

/// Triangulated arm keypoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose3D {
    pub wrist: CameraPoint3D,
    pub elbow: CameraPoint3D,
    pub shoulder: Option<CameraPoint3D>,
}

/// A triangulated candidate together with the match it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Object3D {
    pub point: CameraPoint3D,
    pub source: MatchedCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Position of the winner in `distances`.
    pub selected_index: usize,
    /// Match index of the winner (its `MatchedCandidate::index`).
    pub source_index: usize,
    pub object_3d: CameraPoint3D,
    pub object_2d_left: PixelPoint,
    /// Perpendicular distance of every triangulated candidate, in meters.
    pub distances: Vec<f64>,
    pub extension_point: CameraPoint3D,
    pub warnings: Vec<String>,
}

fn triangulate_keypoint(
    frame: &Frame,
    rig: &CalibratedStereoRig,
    k: Keypoint,
) -> Result<Option<CameraPoint3D>, PointingError> {
    let (Some(l), Some(r)) = (frame.pose_left.get(k), frame.pose_right.get(k)) else {
        return Ok(None);
    };
    triangulate(rig, l, r)
        .map(Some)
        .map_err(|_| PointingError::PoseRejected {
            keypoint: k,
            disparity_px: l.x - r.x,
        })
}

fn check_gap(
    a: &CameraPoint3D,
    b: &CameraPoint3D,
    near: Keypoint,
    far: Keypoint,
    max_m: f64,
) -> Result<(), PointingError> {
    let gap_m = (a.z - b.z).abs();
    // Written so that a NaN gap is rejected too.
    if !(gap_m <= max_m) {
        return Err(PointingError::InfeasiblePose {
            near,
            far,
            gap_m,
            max_m,
        });
    }
    Ok(())
}

/// Triangulates wrist, elbow and (when the shoulder filter is on) shoulder
/// from their left/right pixels, then applies the depth-gap filter.
pub fn triangulate_pose(
    frame: &Frame,
    rig: &CalibratedStereoRig,
    cfg: &PointingConfig,
) -> Result<Pose3D, PointingError> {
    let wrist = triangulate_keypoint(frame, rig, Keypoint::Wrist)?.expect("wrist always present");
    let elbow = triangulate_keypoint(frame, rig, Keypoint::Elbow)?.expect("elbow always present");
    let shoulder = if cfg.shoulder_filter {
        Some(
            triangulate_keypoint(frame, rig, Keypoint::Shoulder)?
                .ok_or(PointingError::MissingShoulder)?,
        )
    } else {
        triangulate_keypoint(frame, rig, Keypoint::Shoulder)
            .ok()
            .flatten()
    };

    check_gap(
        &wrist,
        &elbow,
        Keypoint::Wrist,
        Keypoint::Elbow,
        cfg.z_gap_max,
    )?;
    if cfg.shoulder_filter {
        let s = shoulder.as_ref().expect("checked above");
        check_gap(
            &elbow,
            s,
            Keypoint::Elbow,
            Keypoint::Shoulder,
            cfg.z_gap_max,
        )?;
    }
    Ok(Pose3D {
        wrist,
        elbow,
        shoulder,
    })
}

/// Triangulates every match; matches that do not yield a finite point in
/// front of the camera are dropped with a warning.
pub fn triangulate_candidates(
    matches: &[MatchedCandidate],
    rig: &CalibratedStereoRig,
) -> (Vec<Object3D>, Vec<String>) {
    let mut objects = Vec::with_capacity(matches.len());
    let mut warnings = Vec::new();
    for m in matches {
        match triangulate(rig, m.left, m.right) {
            Ok(point) if point.is_finite() && point.z > 0.0 => {
                objects.push(Object3D { point, source: *m })
            }
            Ok(point) => warnings.push(format!("candidate {} dropped: z = {}", m.index, point.z)),
            Err(e) => warnings.push(format!("candidate {} dropped: {e}", m.index)),
        }
    }
    (objects, warnings)
}

/// `w + s_f (w - e)`.
pub fn extend_pointing(
    wrist: CameraPoint3D,
    elbow: CameraPoint3D,
    scale_factor: f64,
) -> Result<CameraPoint3D, PointingError> {
    let w = wrist.to_vector();
    let forearm = w - elbow.to_vector();
    let length_m = forearm.norm();
    if !(length_m >= MIN_FOREARM_LENGTH_M) {
        return Err(PointingError::DegeneratePointing { length_m });
    }
    Ok(CameraPoint3D::from_vector(w + scale_factor * forearm))
}

/// Distance from `o` to the infinite line through `w` and `ext`.
pub fn perpendicular_distance(
    o: CameraPoint3D,
    w: CameraPoint3D,
    ext: CameraPoint3D,
) -> Result<f64, PointingError> {
    let ext_v = ext.to_vector();
    let line = w.to_vector() - ext_v;
    let length_m = line.norm();
    if !(length_m >= MIN_LINE_LENGTH_M) {
        return Err(PointingError::DegeneratePointing { length_m });
    }
    Ok((o.to_vector() - ext_v).cross(&line).norm() / length_m)
}

/// Picks the candidate closest to the pointing line.
pub fn select_object(
    objects: &[Object3D],
    wrist: CameraPoint3D,
    ext: CameraPoint3D,
    cfg: &PointingConfig,
) -> Result<SelectionResult, PointingError> {
    if objects.is_empty() {
        return Err(PointingError::NoCandidates);
    }
    let distances = objects
        .iter()
        .map(|o| perpendicular_distance(o.point, wrist, ext))
        .collect::<Result<Vec<_>, _>>()?;
    let selected_index = argmin_with_ties(&distances, objects, cfg.tie_break);
    let winner = &objects[selected_index];
    Ok(SelectionResult {
        selected_index,
        source_index: winner.source.index,
        object_3d: winner.point,
        object_2d_left: winner.source.left,
        distances,
        extension_point: ext,
        warnings: Vec::new(),
    })
}

fn argmin_with_ties(distances: &[f64], objects: &[Object3D], rule: TieBreak) -> usize {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let mut tied = distances
        .iter()
        .enumerate()
        .filter(|(_, d)| **d - min <= TIE_EPSILON_M)
        .map(|(i, _)| i);
    let first = tied.next().expect("non-empty candidate list has a minimum");
    match rule {
        TieBreak::LowestIndex => first,
        TieBreak::ClosestZ => tied.fold(first, |best, i| {
            if objects[i].point.z < objects[best].point.z {
                i
            } else {
                best
            }
        }),
    }
}

/// Pipeline stage a rejection originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mask,
    Matching,
    Pose,
    Pointing,
    Selection,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Mask => "mask",
            Stage::Matching => "matching",
            Stage::Pose => "pose",
            Stage::Pointing => "pointing",
            Stage::Selection => "selection",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResolveError {
    #[error("{stage}: {error}")]
    Candidates { stage: Stage, error: CandidateError },
    #[error("{stage}: {error}")]
    Pointing { stage: Stage, error: PointingError },
}

impl ResolveError {
    pub fn stage(&self) -> Stage {
        match self {
            Self::Candidates { stage, .. } | Self::Pointing { stage, .. } => *stage,
        }
    }

    /// Short machine-readable reason, e.g. `"InfeasiblePose"`.
    pub fn reason(&self) -> &'static str {
        match self {
            Self::Candidates { error, .. } => match error {
                CandidateError::EmptyMask { .. } => "EmptyMask",
                CandidateError::DimensionMismatch { .. } => "DimensionMismatch",
            },
            Self::Pointing { error, .. } => error.name(),
        }
    }
}

fn at<E>(stage: Stage) -> impl FnOnce(E) -> ResolveError
where
    E: Into<StageError>,
{
    move |e| match e.into() {
        StageError::Candidates(error) => ResolveError::Candidates { stage, error },
        StageError::Pointing(error) => ResolveError::Pointing { stage, error },
    }
}

enum StageError {
    Candidates(CandidateError),
    Pointing(PointingError),
}

impl From<CandidateError> for StageError {
    fn from(e: CandidateError) -> Self {
        Self::Candidates(e)
    }
}

impl From<PointingError> for StageError {
    fn from(e: PointingError) -> Self {
        Self::Pointing(e)
    }
}

/// Resolves the pointed-at object of one frame.
///
/// Mask both images from their own pose, match, triangulate the pose and the
/// candidates, extend the forearm and select.
pub fn resolve(
    frame: &Frame,
    rig: &CalibratedStereoRig,
    cfg: &ResolveConfig,
) -> Result<SelectionResult, ResolveError> {
    let keep_left =
        compute_mask(&frame.pose_left, &frame.meta, &cfg.mask).map_err(at(Stage::Mask))?;
    let keep_right =
        compute_mask(&frame.pose_right, &frame.meta, &cfg.mask).map_err(at(Stage::Mask))?;
    let left = filter_candidates(&frame.features_left, &keep_left);
    let right = filter_candidates(&frame.features_right, &keep_right);
    let matches = match_stereo(&left, &right, &cfg.matching).map_err(at(Stage::Matching))?;

    let pose = triangulate_pose(frame, rig, &cfg.pointing).map_err(at(Stage::Pose))?;
    let (objects, mut warnings) = triangulate_candidates(&matches, rig);
    let ext = extend_pointing(pose.wrist, pose.elbow, cfg.pointing.scale_factor)
        .map_err(at(Stage::Pointing))?;
    let mut result =
        select_object(&objects, pose.wrist, ext, &cfg.pointing).map_err(at(Stage::Selection))?;

    let mut all = validate_frame_with_tolerance(frame, rig, cfg.matching.epipolar_tolerance_px)
        .into_iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>();
    all.append(&mut warnings);
    result.warnings = all;
    Ok(result)
}
