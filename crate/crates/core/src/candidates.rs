//! Candidate objects: image masking around the pointing arm and stereo
//! descriptor matching.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{FeatureCandidate, FrameMeta, Pose2D};
use crate::stereo::PixelPoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CandidateError {
    /// The retained column interval is empty; nothing can be detected.
    #[error("mask leaves no columns: [{min}, {max}]")]
    EmptyMask { min: f64, max: f64 },
    #[error("descriptor dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Which side of the wrist is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideRule {
    /// Keep the side the 2D forearm points toward.
    #[default]
    AutoFromArm,
    KeepLeftOfWrist,
    KeepRightOfWrist,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// Gap between the wrist column and the first retained column.
    pub offset_px: f64,
    pub side_rule: SideRule,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            offset_px: 20.0,
            side_rule: SideRule::AutoFromArm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Maximum nearest / second-nearest descriptor distance ratio.
    pub ratio_threshold: f64,
    /// Maximum `|y_left - y_right|` for an accepted match.
    pub epipolar_tolerance_px: f64,
    /// Minimum `x_left - x_right` for an accepted match.
    pub min_disparity_px: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            ratio_threshold: 0.3,
            epipolar_tolerance_px: 2.0,
            min_disparity_px: 1.0,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.offset_px >= 0.0) || !self.offset_px.is_finite() {
            return Err(format!(
                "mask.offset_px must be >= 0, got {}",
                self.offset_px
            ));
        }
        Ok(())
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return Err(format!(
                "matching.ratio_threshold must lie in (0, 1], got {}",
                self.ratio_threshold
            ));
        }
        if !(self.epipolar_tolerance_px >= 0.0) || !self.epipolar_tolerance_px.is_finite() {
            return Err(format!(
                "matching.epipolar_tolerance_px must be >= 0, got {}",
                self.epipolar_tolerance_px
            ));
        }
        if !(self.min_disparity_px > 0.0) || !self.min_disparity_px.is_finite() {
            return Err(format!(
                "matching.min_disparity_px must be > 0, got {}",
                self.min_disparity_px
            ));
        }
        Ok(())
    }
}

/// Closed range of retained image columns. The mask always spans the full
/// image height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnInterval {
    pub min: f64,
    pub max: f64,
}

impl ColumnInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }
}

/// Columns that may hold the pointed-at object.
///
/// Everything from the wrist (minus `offset_px`) toward the diver is masked.
pub fn compute_mask(
    pose: &Pose2D,
    meta: &FrameMeta,
    cfg: &MaskConfig,
) -> Result<ColumnInterval, CandidateError> {
    let keep_left = match cfg.side_rule {
        SideRule::AutoFromArm => pose.wrist.x < pose.elbow.x,
        SideRule::KeepLeftOfWrist => true,
        SideRule::KeepRightOfWrist => false,
    };
    let interval = if keep_left {
        ColumnInterval {
            min: 0.0,
            max: pose.wrist.x - cfg.offset_px,
        }
    } else {
        ColumnInterval {
            min: pose.wrist.x + cfg.offset_px,
            max: meta.width(),
        }
    };
    if interval.min > interval.max {
        return Err(CandidateError::EmptyMask {
            min: interval.min,
            max: interval.max,
        });
    }
    Ok(interval)
}

/// Features whose column lies in `keep`, in their original order.
pub fn filter_candidates(
    features: &[FeatureCandidate],
    keep: &ColumnInterval,
) -> Vec<FeatureCandidate> {
    features
        .iter()
        .filter(|c| keep.contains(c.point.x))
        .cloned()
        .collect()
}

/// A stereo correspondence accepted by the matcher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedCandidate {
    pub left: PixelPoint,
    pub right: PixelPoint,
    /// Descriptor distance to the accepted right feature.
    pub match_distance: f64,
    /// Position in acceptance order.
    pub index: usize,
    pub left_feature: usize,
    pub right_feature: usize,
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

struct Proposal {
    left: usize,
    right: usize,
    distance: f64,
}

/// Brute-force two-nearest-neighbour matching of left features against right
/// features with a ratio test.
///
/// A left feature is proposed for its nearest right feature when
/// `d1 <= ratio * d2`, the pair lies within the epipolar tolerance and has at
/// least the minimum disparity. Proposals are then granted in ascending `d1`
/// (left index on ties); a proposal whose right feature is already taken is
/// dropped, not re-routed to its second choice.
pub fn match_stereo(
    left: &[FeatureCandidate],
    right: &[FeatureCandidate],
    cfg: &MatchConfig,
) -> Result<Vec<MatchedCandidate>, CandidateError> {
    let dim = match left.first().or(right.first()) {
        Some(c) => c.descriptor.len(),
        None => return Ok(Vec::new()),
    };
    for c in left.iter().chain(right) {
        if c.descriptor.len() != dim {
            return Err(CandidateError::DimensionMismatch {
                expected: dim,
                found: c.descriptor.len(),
            });
        }
    }
    if right.len() < 2 {
        return Ok(Vec::new());
    }

    let mut proposals: Vec<Proposal> = Vec::new();
    for (i, l) in left.iter().enumerate() {
        // (distance, index) of the two nearest right features.
        let mut best = (f64::INFINITY, usize::MAX);
        let mut second = f64::INFINITY;
        for (j, r) in right.iter().enumerate() {
            let d = euclidean(&l.descriptor, &r.descriptor);
            if d < best.0 {
                second = best.0;
                best = (d, j);
            } else if d < second {
                second = d;
            }
        }
        let (d1, j) = best;
        if !(second > 0.0) || d1 > cfg.ratio_threshold * second {
            continue;
        }
        let r = &right[j];
        if l.point.x - r.point.x < cfg.min_disparity_px
            || (l.point.y - r.point.y).abs() > cfg.epipolar_tolerance_px
        {
            continue;
        }
        proposals.push(Proposal {
            left: i,
            right: j,
            distance: d1,
        });
    }

    proposals.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.left.cmp(&b.left)));
    let mut taken = vec![false; right.len()];
    let mut out = Vec::new();
    for p in proposals {
        if std::mem::replace(&mut taken[p.right], true) {
            continue;
        }
        out.push(MatchedCandidate {
            left: left[p.left].point,
            right: right[p.right].point,
            match_distance: p.distance,
            index: out.len(),
            left_feature: p.left,
            right_feature: p.right,
        });
    }
    Ok(out)
}
