//! Rectified pinhole stereo model.
//!
//! Everything here is expressed in the left camera frame: origin at the left
//! optical center, `x` to the right, `y` down, `z` forward. The right camera
//! sits at `(baseline_m, 0, 0)` with identical orientation, which is what a
//! pair of rectified images describes.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by the stereo geometry functions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StereoError {
    /// Disparity that does not produce a finite, positive depth.
    #[error("invalid disparity {0} px (depth would be non-positive or infinite)")]
    InvalidDisparity(f64),
    /// Point at or behind the image plane of the left camera.
    #[error("point is behind the camera (z = {0} m)")]
    BehindCamera(f64),
}

/// A rig invariant that does not hold; carries the offending field name.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid rig field `{field}`: {reason}")]
pub struct RigValidationError {
    pub field: &'static str,
    pub reason: String,
}

/// A point in image coordinates, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Euclidean distance in pixels.
    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A 3D point in the left camera frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraPoint3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CameraPoint3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: nalgebra::Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &CameraPoint3D) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// Calibrated, rectified stereo pair.
///
/// `focal_length_px` is shared by both rectified images. The right principal
/// point may differ from the left one in `x` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedStereoRig {
    pub focal_length_px: f64,
    pub principal_x_px: f64,
    pub principal_y_px: f64,
    pub principal_x_right_px: f64,
    pub baseline_m: f64,
    pub image_width_px: u32,
    pub image_height_px: u32,
}

impl CalibratedStereoRig {
    /// Builds a rig and checks its invariants.
    pub fn new(
        focal_length_px: f64,
        principal_x_px: f64,
        principal_y_px: f64,
        principal_x_right_px: f64,
        baseline_m: f64,
        image_width_px: u32,
        image_height_px: u32,
    ) -> Result<Self, RigValidationError> {
        let rig = Self {
            focal_length_px,
            principal_x_px,
            principal_y_px,
            principal_x_right_px,
            baseline_m,
            image_width_px,
            image_height_px,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<(), RigValidationError> {
        fn fail(field: &'static str, reason: impl Into<String>) -> RigValidationError {
            RigValidationError {
                field,
                reason: reason.into(),
            }
        }
        let finite = [
            ("focal_length_px", self.focal_length_px),
            ("principal_x_px", self.principal_x_px),
            ("principal_y_px", self.principal_y_px),
            ("principal_x_right_px", self.principal_x_right_px),
            ("baseline_m", self.baseline_m),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(fail(field, "must be finite"));
            }
        }
        if self.focal_length_px <= 0.0 {
            return Err(fail("focal_length_px", "must be > 0"));
        }
        if self.baseline_m <= 0.0 {
            return Err(fail("baseline_m", "must be > 0"));
        }
        if self.image_width_px == 0 {
            return Err(fail("image_width_px", "must be > 0"));
        }
        if self.image_height_px == 0 {
            return Err(fail("image_height_px", "must be > 0"));
        }
        let w = f64::from(self.image_width_px);
        let h = f64::from(self.image_height_px);
        if !(0.0..w).contains(&self.principal_x_px) {
            return Err(fail("principal_x_px", format!("must lie in [0, {w})")));
        }
        if !(0.0..h).contains(&self.principal_y_px) {
            return Err(fail("principal_y_px", format!("must lie in [0, {h})")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        f64::from(self.image_width_px)
    }

    pub fn height(&self) -> f64 {
        f64::from(self.image_height_px)
    }

    /// True when `p` lies inside `[0, W] x [0, H]`.
    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.is_finite() && (0.0..=self.width()).contains(&p.x) && (0.0..=self.height()).contains(&p.y)
    }

    /// Disparity offset produced by differing principal points, `c_x - c_x^right`.
    pub fn principal_offset_px(&self) -> f64 {
        self.principal_x_px - self.principal_x_right_px
    }

    /// Homogeneous reprojection matrix mapping `(x, y, d, 1)` to `(X, Y, Z, W)`.
    ///
    /// Uses the right camera translation `T_x = +B` and `+f` in the third row,
    /// so that a positive disparity yields a positive depth.
    pub fn reprojection_matrix(&self) -> Matrix4<f64> {
        let b = self.baseline_m;
        #[rustfmt::skip]
        let q = Matrix4::new(
            1.0, 0.0, 0.0, -self.principal_x_px,
            0.0, 1.0, 0.0, -self.principal_y_px,
            0.0, 0.0, 0.0, self.focal_length_px,
            0.0, 0.0, 1.0 / b, -self.principal_offset_px() / b,
        );
        q
    }
}

/// Horizontal disparity between matched left and right columns.
pub fn disparity(x_left: f64, x_right: f64) -> f64 {
    x_left - x_right
}

/// Depth from disparity, `f * B / d`.
pub fn depth_from_disparity(rig: &CalibratedStereoRig, d: f64) -> Result<f64, StereoError> {
    if !d.is_finite() || d <= 0.0 {
        return Err(StereoError::InvalidDisparity(d));
    }
    let z = rig.focal_length_px * rig.baseline_m / d;
    if !z.is_finite() || z <= 0.0 {
        return Err(StereoError::InvalidDisparity(d));
    }
    Ok(z)
}

/// Back-projects a left-image pixel with its disparity into the camera frame.
///
/// The disparity is first corrected by the principal point offset
/// `c_x - c_x^right` (zero for most rectified rigs), then the point is
/// recovered through [`CalibratedStereoRig::reprojection_matrix`].
pub fn reproject(
    rig: &CalibratedStereoRig,
    p_left: PixelPoint,
    d: f64,
) -> Result<CameraPoint3D, StereoError> {
    // Validity is judged on the corrected disparity, which is the one that
    // actually divides f*B.
    let effective = d - rig.principal_offset_px();
    depth_from_disparity(rig, effective).map_err(|_| StereoError::InvalidDisparity(d))?;
    let h = rig.reprojection_matrix() * Vector4::new(p_left.x, p_left.y, d, 1.0);
    let p = CameraPoint3D::new(h.x / h.w, h.y / h.w, h.z / h.w);
    if !p.is_finite() || p.z <= 0.0 {
        return Err(StereoError::InvalidDisparity(d));
    }
    Ok(p)
}

/// Projects a camera-frame point into both rectified images.
pub fn project_stereo(
    rig: &CalibratedStereoRig,
    p: CameraPoint3D,
) -> Result<(PixelPoint, PixelPoint), StereoError> {
    if !(p.z > 0.0) || !p.is_finite() {
        return Err(StereoError::BehindCamera(p.z));
    }
    let f = rig.focal_length_px;
    let y = f * p.y / p.z + rig.principal_y_px;
    let left = PixelPoint::new(f * p.x / p.z + rig.principal_x_px, y);
    let right = PixelPoint::new(
        f * (p.x - rig.baseline_m) / p.z + rig.principal_x_right_px,
        y,
    );
    Ok((left, right))
}

/// Triangulates a matched left/right pixel pair.
pub fn triangulate(
    rig: &CalibratedStereoRig,
    left: PixelPoint,
    right: PixelPoint,
) -> Result<CameraPoint3D, StereoError> {
    reproject(rig, left, disparity(left.x, right.x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rig() -> CalibratedStereoRig {
        CalibratedStereoRig::new(1000.0, 800.0, 600.0, 800.0, 0.1, 1600, 1200).unwrap()
    }

    fn assert_point(p: CameraPoint3D, x: f64, y: f64, z: f64) {
        assert_abs_diff_eq!(p.x, x, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, y, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, z, epsilon = 1e-12);
    }

    #[test]
    fn disparity_examples() {
        assert_eq!(disparity(850.0, 800.0), 50.0);
        assert_eq!(disparity(800.0, 800.0), 0.0);
        assert_eq!(disparity(790.0, 800.0), -10.0);
    }

    #[test]
    fn depth_examples() {
        let rig = rig();
        assert_abs_diff_eq!(
            depth_from_disparity(&rig, 50.0).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert_eq!(
            depth_from_disparity(&rig, 0.0),
            Err(StereoError::InvalidDisparity(0.0))
        );
        assert_eq!(
            depth_from_disparity(&rig, -10.0),
            Err(StereoError::InvalidDisparity(-10.0))
        );
        assert!(depth_from_disparity(&rig, f64::NAN).is_err());
        assert!(depth_from_disparity(&rig, f64::INFINITY).is_err());
    }

    #[test]
    fn reproject_examples() {
        let rig = rig();
        assert_point(
            reproject(&rig, PixelPoint::new(850.0, 600.0), 50.0).unwrap(),
            0.1,
            0.0,
            2.0,
        );
        assert_point(
            reproject(&rig, PixelPoint::new(800.0, 600.0), 50.0).unwrap(),
            0.0,
            0.0,
            2.0,
        );
        assert_point(
            reproject(&rig, PixelPoint::new(850.0, 700.0), 25.0).unwrap(),
            0.2,
            0.4,
            4.0,
        );
        assert!(matches!(
            reproject(&rig, PixelPoint::new(850.0, 700.0), 0.0),
            Err(StereoError::InvalidDisparity(_))
        ));
    }

    #[test]
    fn reproject_matches_independent_forward_projection() {
        // Pinhole projection written out per camera, not via project_stereo.
        let rig = rig();
        let p = reproject(&rig, PixelPoint::new(850.0, 700.0), 25.0).unwrap();
        let f = 1000.0;
        let left = (f * p.x / p.z + 800.0, f * p.y / p.z + 600.0);
        let right_cam_x = p.x - 0.1;
        let right = (f * right_cam_x / p.z + 800.0, f * p.y / p.z + 600.0);
        assert_abs_diff_eq!(left.0, 850.0, epsilon = 1e-9);
        assert_abs_diff_eq!(left.1, 700.0, epsilon = 1e-9);
        assert_abs_diff_eq!(right.0, 825.0, epsilon = 1e-9);
        assert_abs_diff_eq!(right.1, 700.0, epsilon = 1e-9);
    }

    #[test]
    fn project_examples() {
        let rig = rig();
        let (l, r) = project_stereo(&rig, CameraPoint3D::new(0.1, 0.0, 2.0)).unwrap();
        assert_abs_diff_eq!(l.x, 850.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.y, 600.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.x, 800.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.y, 600.0, epsilon = 1e-12);

        let (l, r) = project_stereo(&rig, CameraPoint3D::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((l.x, l.y), (800.0, 600.0));
        assert_abs_diff_eq!(r.x, 700.0, epsilon = 1e-12);

        assert_eq!(
            project_stereo(&rig, CameraPoint3D::new(0.0, 0.0, -1.0)),
            Err(StereoError::BehindCamera(-1.0))
        );
        assert!(project_stereo(&rig, CameraPoint3D::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn offset_principal_points_round_trip() {
        let rig = CalibratedStereoRig::new(900.0, 790.0, 610.0, 760.0, 0.12, 1600, 1200).unwrap();
        let p = CameraPoint3D::new(-0.3, 0.2, 3.5);
        let (l, r) = project_stereo(&rig, p).unwrap();
        let q = triangulate(&rig, l, r).unwrap();
        assert_abs_diff_eq!(p.x, q.x, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, q.y, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, q.z, epsilon = 1e-12);
    }

    #[test]
    fn rig_validation_names_field() {
        let err =
            CalibratedStereoRig::new(1000.0, 800.0, 600.0, 800.0, -0.1, 1600, 1200).unwrap_err();
        assert_eq!(err.field, "baseline_m");
        let err = CalibratedStereoRig::new(0.0, 800.0, 600.0, 800.0, 0.1, 1600, 1200).unwrap_err();
        assert_eq!(err.field, "focal_length_px");
        let err =
            CalibratedStereoRig::new(1000.0, 1600.0, 600.0, 800.0, 0.1, 1600, 1200).unwrap_err();
        assert_eq!(err.field, "principal_x_px");
        let err = CalibratedStereoRig::new(1000.0, 800.0, 600.0, 800.0, 0.1, 1600, 0).unwrap_err();
        assert_eq!(err.field, "image_height_px");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_rig() -> impl Strategy<Value = CalibratedStereoRig> {
            (
                300.0..2000.0f64,
                0.3..0.7f64,
                0.3..0.7f64,
                -20.0..20.0f64,
                0.03..0.5f64,
            )
                .prop_map(|(f, cx, cy, dcx, b)| {
                    CalibratedStereoRig::new(
                        f,
                        cx * 1600.0,
                        cy * 1200.0,
                        cx * 1600.0 + dcx,
                        b,
                        1600,
                        1200,
                    )
                    .unwrap()
                })
        }

        proptest! {
            #[test]
            fn round_trip(rig in arb_rig(), u in -0.9..0.9f64, v in -0.9..0.9f64, z in 0.5..20.0f64) {
                let p = CameraPoint3D::new(u * z * 0.5, v * z * 0.5, z);
                let (l, r) = project_stereo(&rig, p).unwrap();
                prop_assert_eq!(l.y, r.y);
                let q = triangulate(&rig, l, r).unwrap();
                prop_assert!(p.distance(&q) < 1e-9);
            }

            #[test]
            fn reciprocity(d in 1e-3..1e4f64, f in 100.0..3000.0f64, b in 0.01..1.0f64) {
                let rig = CalibratedStereoRig::new(f, 800.0, 600.0, 800.0, b, 1600, 1200).unwrap();
                let z = depth_from_disparity(&rig, d).unwrap();
                prop_assert!(((z * d) - f * b).abs() <= 1e-12 * f * b);
            }

            #[test]
            fn depth_is_strictly_decreasing(d in 1e-3..1e4f64, delta in 1e-3..100.0f64) {
                let rig = CalibratedStereoRig::new(1000.0, 800.0, 600.0, 800.0, 0.1, 1600, 1200).unwrap();
                prop_assert!(depth_from_disparity(&rig, d + delta).unwrap() < depth_from_disparity(&rig, d).unwrap());
            }
        }
    }
}
