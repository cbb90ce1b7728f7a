//! Synthetic stereo scenes with known answers.
//!
//! A scene is an arm aimed at one of several objects, projected through a
//! [`CalibratedStereoRig`] into a [`Frame`]. Ground truth is computed from the
//! original 3D geometry with its own distance formula, so it can be used to
//! check the resolver rather than echo it.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Arm, FeatureCandidate, Frame, FrameMeta, Pose2D, SCHEMA_VERSION};
use crate::stereo::{project_stereo, CalibratedStereoRig, CameraPoint3D, PixelPoint};

pub const DEFAULT_DESCRIPTOR_DIM: usize = 32;
/// Depth gap bound used to decide whether a generated arm is plausible.
pub const ARM_Z_GAP_MAX_M: f64 = 0.5;
const MAX_PERTURBATION_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("{0} projects outside the image")]
    OutOfFrustum(String),
    #[error("infeasible arm geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("batch size must be positive")]
    EmptyBatch,
    #[error("scene {index}: {source}")]
    Scene {
        index: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("malformed document: {0}")]
    Document(String),
}

/// Shoulder, elbow and wrist of the pointing arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPose {
    pub shoulder: CameraPoint3D,
    pub elbow: CameraPoint3D,
    pub wrist: CameraPoint3D,
}

impl ArmPose {
    fn translated(&self, dz: f64) -> Self {
        let t = |p: CameraPoint3D| CameraPoint3D::new(p.x, p.y, p.z + dz);
        Self {
            shoulder: t(self.shoulder),
            elbow: t(self.elbow),
            wrist: t(self.wrist),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation of Gaussian noise on every pixel coordinate.
    pub pixel_sigma: f64,
    /// Standard deviation of Gaussian noise on every descriptor entry.
    pub descriptor_sigma: f64,
}

/// Per-scene perturbation applied by [`generate_batch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterSpec {
    /// Half-width of the uniform jitter on each object coordinate.
    pub object_m: f64,
    /// Half-width of the uniform jitter on each wrist coordinate.
    pub wrist_m: f64,
}

impl Default for JitterSpec {
    fn default() -> Self {
        Self {
            object_m: 0.05,
            wrist_m: 0.05,
        }
    }
}

fn default_frame_id() -> String {
    "scene".to_string()
}

fn default_descriptor_dim() -> usize {
    DEFAULT_DESCRIPTOR_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub rig: CalibratedStereoRig,
    pub arm: ArmPose,
    pub objects: Vec<CameraPoint3D>,
    pub intended_target: usize,
    /// Number of unmatched background features added to each image.
    #[serde(default)]
    pub distractors: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frame_id")]
    pub frame_id: String,
    #[serde(default)]
    pub pointing_arm: Arm,
    #[serde(default = "default_descriptor_dim")]
    pub descriptor_dim: usize,
    #[serde(default)]
    pub jitter: JitterSpec,
}

/// Known answer for a generated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame_id: String,
    /// Object nearest to the true pointing line.
    pub true_selection: usize,
    pub intended_target: usize,
    /// Noise-free left-image projection of every object.
    pub true_left_pixels: Vec<PixelPoint>,
    /// Distance of every object to the true pointing line, in meters.
    pub true_distances: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthDoc {
    schema_version: u32,
    frame_id: String,
    true_selection: usize,
    intended_target: usize,
    true_left_pixels: Vec<[f64; 2]>,
    true_distances: Vec<f64>,
}

impl GroundTruth {
    pub fn to_document(&self) -> String {
        let doc = GroundTruthDoc {
            schema_version: SCHEMA_VERSION,
            frame_id: self.frame_id.clone(),
            true_selection: self.true_selection,
            intended_target: self.intended_target,
            true_left_pixels: self.true_left_pixels.iter().map(|p| [p.x, p.y]).collect(),
            true_distances: self.true_distances.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("ground truth always serializes");
        s.push('\n');
        s
    }

    pub fn from_document(document: &str) -> Result<Self, SimError> {
        let doc: GroundTruthDoc =
            serde_json::from_str(document).map_err(|e| SimError::Document(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(SimError::Document(format!(
                "unsupported schema_version {}",
                doc.schema_version
            )));
        }
        if doc.true_left_pixels.len() != doc.true_distances.len()
            || doc.true_selection >= doc.true_distances.len()
        {
            return Err(SimError::Document(
                "true_selection / per-object lists are inconsistent".into(),
            ));
        }
        Ok(Self {
            frame_id: doc.frame_id,
            true_selection: doc.true_selection,
            intended_target: doc.intended_target,
            true_left_pixels: doc
                .true_left_pixels
                .into_iter()
                .map(|[x, y]| PixelPoint::new(x, y))
                .collect(),
            true_distances: doc.true_distances,
        })
    }
}

// Plain-array vector helpers; the oracle deliberately avoids the resolver's
// nalgebra path.
fn sub(a: CameraPoint3D, b: CameraPoint3D) -> [f64; 3] {
    [a.x - b.x, a.y - b.y, a.z - b.z]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Distance from `object` to the line through `elbow` and `wrist`, by
/// removing the component of `object - wrist` along the forearm.
pub fn oracle_line_distance(
    object: CameraPoint3D,
    wrist: CameraPoint3D,
    elbow: CameraPoint3D,
) -> f64 {
    let forearm = sub(wrist, elbow);
    let len = norm(forearm);
    let u = [forearm[0] / len, forearm[1] / len, forearm[2] / len];
    let v = sub(object, wrist);
    let along = dot(v, u);
    let rejection = [
        v[0] - along * u[0],
        v[1] - along * u[1],
        v[2] - along * u[2],
    ];
    norm(rejection)
}

fn along(origin: CameraPoint3D, dir: [f64; 3], t: f64) -> CameraPoint3D {
    CameraPoint3D::new(
        origin.x + t * dir[0],
        origin.y + t * dir[1],
        origin.z + t * dir[2],
    )
}

/// Arm with its wrist at `wrist`, forearm and upper arm collinear with the
/// wrist→target ray.
pub fn aim_arm_from(
    wrist: CameraPoint3D,
    target: CameraPoint3D,
    forearm_m: f64,
    upper_arm_m: f64,
) -> Result<ArmPose, SimError> {
    if !(forearm_m > 0.0) || !(upper_arm_m > 0.0) {
        return Err(SimError::InfeasibleGeometry(format!(
            "segment lengths must be positive ({forearm_m}, {upper_arm_m})"
        )));
    }
    let ray = sub(target, wrist);
    let len = norm(ray);
    if !(len > 1e-9) {
        return Err(SimError::InfeasibleGeometry(
            "target coincides with wrist".into(),
        ));
    }
    let dir = [ray[0] / len, ray[1] / len, ray[2] / len];
    let elbow = along(wrist, dir, -forearm_m);
    let shoulder = along(elbow, dir, -upper_arm_m);
    let arm = ArmPose {
        shoulder,
        elbow,
        wrist,
    };
    check_arm(&arm)?;
    Ok(arm)
}

/// Arm whose wrist sits at depth `wrist_depth` on the camera→target line,
/// pointing at `target` with two segments of `arm_length` each.
pub fn aim_arm_at(
    target: CameraPoint3D,
    wrist_depth: f64,
    arm_length: f64,
) -> Result<ArmPose, SimError> {
    if !(arm_length > 0.0) {
        return Err(SimError::InfeasibleGeometry(format!(
            "arm length must be positive, got {arm_length}"
        )));
    }
    if !(wrist_depth > 0.0) || !(target.z > wrist_depth) {
        return Err(SimError::InfeasibleGeometry(format!(
            "target at depth {} is not beyond the wrist at depth {wrist_depth}",
            target.z
        )));
    }
    let s = wrist_depth / target.z;
    let wrist = CameraPoint3D::new(target.x * s, target.y * s, wrist_depth);
    aim_arm_from(wrist, target, arm_length, arm_length)
}

fn check_arm(arm: &ArmPose) -> Result<(), SimError> {
    for (name, p) in [
        ("wrist", arm.wrist),
        ("elbow", arm.elbow),
        ("shoulder", arm.shoulder),
    ] {
        if !(p.z > 0.0) || !p.is_finite() {
            return Err(SimError::InfeasibleGeometry(format!(
                "{name} is not in front of the camera"
            )));
        }
    }
    let we = (arm.wrist.z - arm.elbow.z).abs();
    let es = (arm.elbow.z - arm.shoulder.z).abs();
    if we > ARM_Z_GAP_MAX_M || es > ARM_Z_GAP_MAX_M {
        return Err(SimError::InfeasibleGeometry(format!(
            "depth gaps {we:.3} / {es:.3} m exceed {ARM_Z_GAP_MAX_M} m"
        )));
    }
    Ok(())
}

impl SceneSpec {
    /// Pool-like layout: three objects spread left to right and slightly in
    /// depth around `depth_m`, a diver to the right aiming at the middle one.
    pub fn pool(rig: CalibratedStereoRig, depth_m: f64) -> Result<Self, SimError> {
        let objects = vec![
            CameraPoint3D::new(-0.5, 0.35, depth_m - 0.25),
            CameraPoint3D::new(-0.15, 0.35, depth_m),
            CameraPoint3D::new(0.2, 0.35, depth_m + 0.25),
        ];
        let wrist = CameraPoint3D::new(0.55, 0.05, depth_m - 0.1);
        let arm = aim_arm_from(wrist, objects[1], 0.3, 0.3)?;
        let spec = Self {
            rig,
            arm,
            objects,
            intended_target: 1,
            distractors: 10,
            noise: NoiseSpec {
                pixel_sigma: 0.0,
                descriptor_sigma: 0.01,
            },
            seed: 0,
            frame_id: default_frame_id(),
            pointing_arm: Arm::Right,
            descriptor_dim: DEFAULT_DESCRIPTOR_DIM,
            jitter: JitterSpec::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.rig
            .validate()
            .map_err(|e| SimError::InvalidSpec(e.to_string()))?;
        if self.objects.is_empty() {
            return Err(SimError::InvalidSpec(
                "at least one object is required".into(),
            ));
        }
        if self.intended_target >= self.objects.len() {
            return Err(SimError::InvalidSpec(format!(
                "intended_target {} out of range for {} objects",
                self.intended_target,
                self.objects.len()
            )));
        }
        if self.descriptor_dim == 0 {
            return Err(SimError::InvalidSpec("descriptor_dim must be > 0".into()));
        }
        for (name, v) in [
            ("noise.pixel_sigma", self.noise.pixel_sigma),
            ("noise.descriptor_sigma", self.noise.descriptor_sigma),
            ("jitter.object_m", self.jitter.object_m),
            ("jitter.wrist_m", self.jitter.wrist_m),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SimError::InvalidSpec(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        check_arm(&self.arm)
    }

    /// Same scene shifted along the optical axis so the mean object depth is
    /// `depth_m`. Translation keeps the arm aimed at the same object.
    pub fn at_depth(&self, depth_m: f64) -> Self {
        let mean = self.objects.iter().map(|o| o.z).sum::<f64>() / self.objects.len() as f64;
        let dz = depth_m - mean;
        let mut out = self.clone();
        out.arm = self.arm.translated(dz);
        for o in &mut out.objects {
            o.z += dz;
        }
        out
    }

    pub fn from_document(document: &str) -> Result<Self, SimError> {
        let spec: Self =
            serde_json::from_str(document).map_err(|e| SimError::Document(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene specs always serialize");
        s.push('\n');
        s
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn perturb_descriptor(rng: &mut ChaCha8Rng, base: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return base.to_vec();
    }
    let noise = Normal::new(0.0, sigma).expect("sigma validated");
    base.iter().map(|v| v + noise.sample(rng)).collect()
}

fn noisy_pixel(rng: &mut ChaCha8Rng, p: PixelPoint, sigma: f64, meta: &FrameMeta) -> PixelPoint {
    if sigma == 0.0 {
        return p;
    }
    let noise = Normal::new(0.0, sigma).expect("sigma validated");
    let x: f64 = p.x + noise.sample(rng);
    let y: f64 = p.y + noise.sample(rng);
    PixelPoint::new(x.clamp(0.0, meta.width()), y.clamp(0.0, meta.height()))
}

fn project_inside(
    rig: &CalibratedStereoRig,
    p: CameraPoint3D,
    what: impl Fn() -> String,
) -> Result<(PixelPoint, PixelPoint), SimError> {
    let (l, r) = project_stereo(rig, p).map_err(|_| SimError::OutOfFrustum(what()))?;
    if !rig.contains(&l) || !rig.contains(&r) {
        return Err(SimError::OutOfFrustum(what()));
    }
    Ok((l, r))
}

/// Renders one scene into a frame and its ground truth.
pub fn generate_scene(spec: &SceneSpec) -> Result<(Frame, GroundTruth), SimError> {
    spec.validate()?;
    let rig = &spec.rig;
    let meta = FrameMeta::from_rig(rig);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = spec.noise.pixel_sigma;

    let arm_px = [
        project_inside(rig, spec.arm.wrist, || "wrist".into())?,
        project_inside(rig, spec.arm.elbow, || "elbow".into())?,
        project_inside(rig, spec.arm.shoulder, || "shoulder".into())?,
    ];
    let object_px = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| project_inside(rig, *o, || format!("object {i}")))
        .collect::<Result<Vec<_>, _>>()?;

    let mut pose_px = [[PixelPoint::default(); 3]; 2];
    for (k, (l, r)) in arm_px.iter().enumerate() {
        pose_px[0][k] = noisy_pixel(&mut rng, *l, sigma, &meta);
        pose_px[1][k] = noisy_pixel(&mut rng, *r, sigma, &meta);
    }

    let dim = spec.descriptor_dim;
    let mut features_left = Vec::with_capacity(spec.objects.len() + spec.distractors);
    let mut features_right = Vec::with_capacity(spec.objects.len() + spec.distractors);
    for (l, r) in &object_px {
        let base = random_unit(&mut rng, dim);
        let dl = perturb_descriptor(&mut rng, &base, spec.noise.descriptor_sigma);
        let dr = perturb_descriptor(&mut rng, &base, spec.noise.descriptor_sigma);
        features_left.push(FeatureCandidate::new(
            noisy_pixel(&mut rng, *l, sigma, &meta),
            dl,
        ));
        features_right.push(FeatureCandidate::new(
            noisy_pixel(&mut rng, *r, sigma, &meta),
            dr,
        ));
    }
    for features in [&mut features_left, &mut features_right] {
        for _ in 0..spec.distractors {
            let p = PixelPoint::new(
                rng.random_range(0.0..=meta.width()),
                rng.random_range(0.0..=meta.height()),
            );
            features.push(FeatureCandidate::new(p, random_unit(&mut rng, dim)));
        }
    }
    features_left.shuffle(&mut rng);
    features_right.shuffle(&mut rng);

    let frame = Frame {
        frame_id: spec.frame_id.clone(),
        arm: spec.pointing_arm,
        meta,
        pose_left: Pose2D::new(pose_px[0][0], pose_px[0][1], pose_px[0][2]),
        pose_right: Pose2D::new(pose_px[1][0], pose_px[1][1], pose_px[1][2]),
        descriptor_dim: dim,
        features_left,
        features_right,
    };

    let true_distances: Vec<f64> = spec
        .objects
        .iter()
        .map(|o| oracle_line_distance(*o, spec.arm.wrist, spec.arm.elbow))
        .collect();
    let mut true_selection = 0;
    for (i, d) in true_distances.iter().enumerate() {
        if *d < true_distances[true_selection] {
            true_selection = i;
        }
    }
    let truth = GroundTruth {
        frame_id: spec.frame_id.clone(),
        true_selection,
        intended_target: spec.intended_target,
        true_left_pixels: object_px.iter().map(|(l, _)| *l).collect(),
        true_distances,
    };
    Ok((frame, truth))
}

fn jitter_point(rng: &mut ChaCha8Rng, p: CameraPoint3D, half_width: f64) -> CameraPoint3D {
    if half_width == 0.0 {
        return p;
    }
    CameraPoint3D::new(
        p.x + rng.random_range(-half_width..=half_width),
        p.y + rng.random_range(-half_width..=half_width),
        p.z + rng.random_range(-half_width..=half_width),
    )
}

fn perturbed_scene(
    base: &SceneSpec,
    index: usize,
    seed: u64,
) -> Result<(Frame, GroundTruth), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let forearm = base.arm.wrist.distance(&base.arm.elbow);
    let upper = base.arm.elbow.distance(&base.arm.shoulder);
    let mut last = SimError::EmptyBatch;
    for _ in 0..MAX_PERTURBATION_ATTEMPTS {
        let mut spec = base.clone();
        spec.objects = base
            .objects
            .iter()
            .map(|o| jitter_point(&mut rng, *o, base.jitter.object_m))
            .collect();
        let wrist = jitter_point(&mut rng, base.arm.wrist, base.jitter.wrist_m);
        spec.seed = rng.next_u64();
        spec.frame_id = format!("{}_{index:05}", base.frame_id);
        let attempt = aim_arm_from(wrist, spec.objects[spec.intended_target], forearm, upper)
            .and_then(|arm| {
                spec.arm = arm;
                generate_scene(&spec)
            });
        match attempt {
            Ok(out) => return Ok(out),
            Err(e @ (SimError::OutOfFrustum(_) | SimError::InfeasibleGeometry(_))) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// `count` jittered copies of `base`, each re-aimed at its (jittered)
/// intended target. Scene `i` depends only on `seed` and `i`.
pub fn generate_batch(
    base: &SceneSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<(Frame, GroundTruth)>, SimError> {
    if count == 0 {
        return Err(SimError::EmptyBatch);
    }
    base.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            perturbed_scene(base, i, seed).map_err(|e| SimError::Scene {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}
