//! Which object is a diver pointing at?
//!
//! `dip3d` resolves a pointing gesture seen by a rectified stereo camera.
//! Given the wrist, elbow and shoulder in both images and a set of image
//! features with descriptors, it
//!
//! 1. masks out the part of each image behind the pointing hand,
//! 2. matches the remaining features left to right with a ratio test,
//! 3. triangulates the arm and the matched candidates,
//! 4. extends the forearm past the wrist, and
//! 5. picks the candidate closest to that line, reporting its left-image
//!    pixel.
//!
//! ```
//! use dip3d::pointing::{resolve, ResolveConfig};
//! use dip3d::sim::{generate_scene, SceneSpec};
//! use dip3d::stereo::CalibratedStereoRig;
//!
//! let rig = CalibratedStereoRig::new(1000.0, 800.0, 600.0, 800.0, 0.1, 1600, 1200)?;
//! let spec = SceneSpec::pool(rig, 3.0)?;
//! let (frame, truth) = generate_scene(&spec)?;
//!
//! let result = resolve(&frame, &rig, &ResolveConfig::default())?;
//! let expected = truth.true_left_pixels[truth.true_selection];
//! assert!(result.object_2d_left.distance(&expected) < 1e-6);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! The [`sim`] module generates scenes with known answers and [`eval`]
//! scores batches of them. The guide under `book/` walks through each stage.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidates;
pub mod config;
pub mod eval;
pub mod frame;
pub mod pointing;
pub mod sim;
pub mod stereo;

pub use candidates::{ColumnInterval, MaskConfig, MatchConfig, MatchedCandidate, SideRule};
pub use config::PipelineConfig;
pub use eval::{EvalRecord, EvalReport, EvalSummary, ResultDocument};
pub use frame::{Arm, FeatureCandidate, Frame, FrameMeta, Keypoint, Pose2D};
pub use pointing::{resolve, PointingConfig, ResolveConfig, ResolveError, SelectionResult};
pub use sim::{GroundTruth, SceneSpec};
pub use stereo::{CalibratedStereoRig, CameraPoint3D, PixelPoint};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/stereo.md")]
    mod stereo {}
    #[doc = include_str!("../../../book/src/candidates.md")]
    mod candidates {}
    #[doc = include_str!("../../../book/src/pointing.md")]
    mod pointing {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
