//! Synthetic scenes and camera trajectories with exact ground truth.
//!
//! World frame is z-up. Cameras use the usual x-right, y-down, z-forward
//! convention. Depth comes from analytic planes so the value at any pixel is
//! a closed-form ray-plane intersection.

mod oracle;

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use nalgebra::{Matrix3, Point3, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::Dof;
use crate::frames::{write_manifest, DepthMap, Frame, FramesError, Profile, SequenceManifest};
use crate::geometry::{relative_pose, Intrinsics, Pose, PoseVector, RotationMatrix, MIN_CAMERA_DEPTH};
use crate::io::atomic_write;
use crate::solver::{Correspondence, EssentialMatrix};

pub use oracle::{brute_force_bench, brute_force_diag, oracle_check_pair, OracleConfig, OracleReport, PredicateResult};

/// Scene points never come closer than this to a camera center.
pub const CAMERA_CLEARANCE: f64 = 0.2;
/// Fewest shared visible points `project_correspondences` will return.
pub const MIN_VISIBLE: usize = 8;
/// Planted outliers land at least this many pixels from their true epipolar line.
pub const OUTLIER_MIN_OFFSET_PX: f64 = 4.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    InvalidSpec(String),
    #[error("only {visible} scene points are visible in both frames (need {MIN_VISIBLE})")]
    TooFewVisible { visible: usize },
    #[error("scene has no planes to render depth from")]
    NoGeometry,
    #[error("frame {0} has no intrinsics")]
    MissingIntrinsics(u64),
    #[error(transparent)]
    Frames(#[from] FramesError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Infinite two-sided plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

impl Plane {
    /// Ray parameter `s` with `origin + s·dir` on the plane, if positive.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let n = Vector3::from(self.normal);
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = n.dot(&(Vector3::from(self.point) - origin)) / denom;
        (s > MIN_CAMERA_DEPTH && s.is_finite()).then_some(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub num_points: usize,
    pub center: [f64; 3],
    /// Box side lengths along world x, y, z.
    pub extent: [f64; 3],
    /// Depth geometry. Defaults to two orthogonal vertical planes crossing at `center`.
    pub planes: Option<Vec<Plane>>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { num_points: 500, center: [0.0; 3], extent: [6.0, 6.0, 4.0], planes: None }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.num_points < 50 {
            return Err(SynthError::InvalidSpec(format!("need at least 50 scene points, got {}", self.num_points)));
        }
        if self.extent.iter().any(|e| !(*e > 0.0 && e.is_finite())) || self.center.iter().any(|c| !c.is_finite()) {
            return Err(SynthError::InvalidSpec("scene box must be finite with positive extent".into()));
        }
        for p in self.planes.iter().flatten() {
            if Vector3::from(p.normal).norm() < 1e-12 || p.point.iter().chain(&p.normal).any(|v| !v.is_finite()) {
                return Err(SynthError::InvalidSpec(format!("bad plane {p:?}")));
            }
        }
        Ok(())
    }

    fn default_planes(&self) -> Vec<Plane> {
        vec![
            Plane { point: self.center, normal: [1.0, 0.0, 0.0] },
            Plane { point: self.center, normal: [0.0, 1.0, 0.0] },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub points: Vec<[f64; 3]>,
    pub planes: Vec<Plane>,
    pub seed: u64,
}

impl SyntheticScene {
    /// Uniform points in the configured box, redrawn while closer than
    /// [`CAMERA_CLEARANCE`] to any of `cameras`.
    pub fn generate(cfg: &SceneConfig, seed: u64, cameras: &[Pose]) -> Result<Self, SynthError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = Vector3::from(cfg.extent) / 2.0;
        let center = Vector3::from(cfg.center);
        let mut points = Vec::with_capacity(cfg.num_points);
        let mut attempts = 0usize;
        while points.len() < cfg.num_points {
            attempts += 1;
            if attempts > 1000 * cfg.num_points {
                return Err(SynthError::InvalidSpec("cameras leave no room for scene points".into()));
            }
            let p = center + Vector3::from_fn(|i, _| rng.random_range(-half[i]..=half[i]));
            if cameras.iter().all(|c| (c.translation - p).norm() >= CAMERA_CLEARANCE) {
                points.push([p.x, p.y, p.z]);
            }
        }
        let planes = cfg.planes.clone().unwrap_or_else(|| cfg.default_planes());
        Ok(Self { points, planes, seed })
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::InvalidSpec(format!("scene file: {e}")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("scene serializes");
        s.push('\n');
        s
    }
}

/// Camera path description. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectorySpec {
    /// Level cameras on a horizontal circle, all aimed at `center`.
    /// Positive steps move counter-clockwise seen from above. After frame
    /// `turn_at`, if set, the camera retraces its path backwards.
    Orbit {
        center: [f64; 3],
        radius: f64,
        height: f64,
        start_deg: f64,
        step_deg: f64,
        frames: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        turn_at: Option<usize>,
    },
    /// `T_k = T_0 · Δ(k · increment)` with a single non-zero pose component.
    /// Rotation increments in degrees, translation increments in metres.
    SingleDof {
        position: [f64; 3],
        look_at: [f64; 3],
        dof: Dof,
        increment: f64,
        frames: usize,
    },
    Static {
        position: [f64; 3],
        look_at: [f64; 3],
        frames: usize,
    },
}

impl TrajectorySpec {
    pub fn orbit(step_deg: f64, frames: usize) -> Self {
        TrajectorySpec::Orbit {
            center: [0.0; 3],
            radius: 3.0,
            height: 0.0,
            start_deg: 0.0,
            step_deg,
            frames,
            turn_at: None,
        }
    }

    /// Orbit that reverses direction halfway, so both motion directions occur.
    pub fn orbit_there_and_back(step_deg: f64, frames: usize) -> Self {
        match Self::orbit(step_deg, frames) {
            TrajectorySpec::Orbit { center, radius, height, start_deg, step_deg, frames, .. } => {
                TrajectorySpec::Orbit { center, radius, height, start_deg, step_deg, frames, turn_at: Some(frames / 2) }
            }
            _ => unreachable!(),
        }
    }

    pub fn single_dof(dof: Dof, increment: f64, frames: usize) -> Self {
        TrajectorySpec::SingleDof { position: [0.0, -3.0, 0.0], look_at: [0.0; 3], dof, increment, frames }
    }

    pub fn frames(&self) -> usize {
        match self {
            TrajectorySpec::Orbit { frames, .. }
            | TrajectorySpec::SingleDof { frames, .. }
            | TrajectorySpec::Static { frames, .. } => *frames,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            TrajectorySpec::Orbit { center, radius, height, start_deg, step_deg, .. } => {
                if !finite(center) || !finite(&[*radius, *height, *start_deg, *step_deg]) {
                    return bad("orbit parameters must be finite");
                }
                if !(*radius > 0.0) {
                    return bad("orbit radius must be positive");
                }
                if *step_deg == 0.0 {
                    return bad("orbit angular step must be non-zero");
                }
            }
            TrajectorySpec::SingleDof { position, look_at, increment, .. } => {
                if !finite(position) || !finite(look_at) || !increment.is_finite() {
                    return bad("single-dof parameters must be finite");
                }
                look_at_rotation(&Vector3::from(*position), &Vector3::from(*look_at))?;
            }
            TrajectorySpec::Static { position, look_at, .. } => {
                if !finite(position) || !finite(look_at) {
                    return bad("static parameters must be finite");
                }
                look_at_rotation(&Vector3::from(*position), &Vector3::from(*look_at))?;
            }
        }
        Ok(())
    }

    /// Camera-to-world poses along the path.
    pub fn poses(&self) -> Result<Vec<Pose>, SynthError> {
        self.validate()?;
        match self {
            TrajectorySpec::Orbit { center, radius, height, start_deg, step_deg, frames, turn_at } => {
                let c = Vector3::from(*center);
                (0..*frames)
                    .map(|k| {
                        let steps = match turn_at {
                            Some(t) if k > *t => 2 * t - k.min(2 * t),
                            _ => k,
                        };
                        let a = (start_deg + steps as f64 * step_deg).to_radians();
                        let pos = c + Vector3::new(radius * a.cos(), radius * a.sin(), *height);
                        Ok(Pose::new(look_at_rotation(&pos, &c)?, pos))
                    })
                    .collect()
            }
            TrajectorySpec::SingleDof { position, look_at, dof, increment, frames } => {
                let p = Vector3::from(*position);
                let start = Pose::new(look_at_rotation(&p, &Vector3::from(*look_at))?, p);
                let step = if dof.is_rotation() { increment.to_radians() } else { *increment };
                Ok((0..*frames)
                    .map(|k| {
                        let mut c = [0.0; 6];
                        c[dof.position()] = k as f64 * step;
                        start * PoseVector::from_components(c).to_pose()
                    })
                    .collect())
            }
            TrajectorySpec::Static { position, look_at, frames } => {
                let p = Vector3::from(*position);
                let pose = Pose::new(look_at_rotation(&p, &Vector3::from(*look_at))?, p);
                Ok(vec![pose; *frames])
            }
        }
    }
}

/// Level camera orientation at `position` looking at `target` (world z-up).
pub fn look_at_rotation(position: &Vector3<f64>, target: &Vector3<f64>) -> Result<RotationMatrix, SynthError> {
    let forward = target - position;
    let up = Vector3::z();
    let right = forward.cross(&up);
    if forward.norm() < 1e-9 || right.norm() < 1e-9 * forward.norm() {
        return Err(SynthError::InvalidSpec("look-at direction is degenerate (zero or vertical)".into()));
    }
    let forward = forward.normalize();
    let right = right.normalize();
    let down = forward.cross(&right);
    Ok(RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[right, down, forward])))
}

pub fn synthetic_intrinsics() -> Intrinsics {
    let cfg = Profile::Synthetic.default_config();
    Intrinsics::new(
        cfg.fx.unwrap(),
        cfg.fy.unwrap(),
        cfg.cx.unwrap(),
        cfg.cy.unwrap(),
        cfg.width.unwrap(),
        cfg.height.unwrap(),
    )
    .expect("synthetic profile intrinsics are valid")
}

pub fn synthetic_depth_scale() -> f64 {
    Profile::Synthetic.default_config().depth_scale.unwrap()
}

fn frame_at(index: usize, pose: Pose, k: Intrinsics) -> Frame {
    Frame {
        index: index as u64,
        image: PathBuf::from(format!("images/{index:06}.png")),
        depth_path: None,
        depth: None,
        intrinsics: Some(k),
        pose,
    }
}

/// Orbit sequence with a depth map rendered for every frame.
pub fn generate_orbit(
    name: &str,
    spec: &TrajectorySpec,
    scene: &SyntheticScene,
) -> Result<SequenceManifest, SynthError> {
    if !matches!(spec, TrajectorySpec::Orbit { .. }) {
        return Err(SynthError::InvalidSpec("generate_orbit needs an orbit trajectory".into()));
    }
    generate_with_depth(name, spec, scene)
}

/// Single-DoF sequence. Frames carry intrinsics but no depth.
pub fn generate_single_dof(name: &str, spec: &TrajectorySpec) -> Result<SequenceManifest, SynthError> {
    if !matches!(spec, TrajectorySpec::SingleDof { .. }) {
        return Err(SynthError::InvalidSpec("generate_single_dof needs a single-dof trajectory".into()));
    }
    let k = synthetic_intrinsics();
    Ok(SequenceManifest {
        sequence: name.to_string(),
        profile: Profile::Synthetic.name().to_string(),
        depth_scale: synthetic_depth_scale(),
        frames: spec.poses()?.into_iter().enumerate().map(|(i, p)| frame_at(i, p, k)).collect(),
    })
}

/// Any trajectory, with depth rendered from the scene planes.
pub fn generate_with_depth(
    name: &str,
    spec: &TrajectorySpec,
    scene: &SyntheticScene,
) -> Result<SequenceManifest, SynthError> {
    let k = synthetic_intrinsics();
    let scale = synthetic_depth_scale();
    let frames = spec
        .poses()?
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut f = frame_at(i, p, k);
            f.depth = Some(render_depth(scene, &p, &k, scale)?);
            f.depth_path = Some(PathBuf::from(format!("depth/{i:06}.png")));
            Ok(f)
        })
        .collect::<Result<_, SynthError>>()?;
    Ok(SequenceManifest {
        sequence: name.to_string(),
        profile: Profile::Synthetic.name().to_string(),
        depth_scale: scale,
        frames,
    })
}

/// Z-depth of the nearest plane along every pixel ray, quantized to
/// `depth_scale`. Pixels whose ray hits nothing are 0 (invalid).
pub fn render_depth(
    scene: &SyntheticScene,
    pose: &Pose,
    k: &Intrinsics,
    depth_scale: f64,
) -> Result<DepthMap, SynthError> {
    if scene.planes.is_empty() {
        return Err(SynthError::NoGeometry);
    }
    let r = *pose.rotation.matrix();
    let origin = pose.translation;
    let mut raw = Vec::with_capacity(k.width as usize * k.height as usize);
    for y in 0..k.height {
        for x in 0..k.width {
            // Ray with unit camera-frame z, so the ray parameter is the z-depth.
            let ray_cam = Vector3::new((f64::from(x) - k.cx) / k.fx, (f64::from(y) - k.cy) / k.fy, 1.0);
            let dir = r * ray_cam;
            let depth = scene.planes.iter().filter_map(|p| p.intersect(&origin, &dir)).fold(f64::INFINITY, f64::min);
            raw.push(if depth.is_finite() { DepthMap::quantize(depth, depth_scale) } else { 0 });
        }
    }
    Ok(DepthMap::new(k.width, k.height, raw, depth_scale))
}

/// Correspondences with side-channel ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMatches {
    pub points: Vec<Correspondence>,
    /// `true` where the target point was replaced by a planted outlier.
    pub outlier: Vec<bool>,
}

impl SyntheticMatches {
    pub fn outlier_count(&self) -> usize {
        self.outlier.iter().filter(|o| **o).count()
    }
}

/// Projects every scene point visible in both frames. Pixel noise is
/// isotropic Gaussian on both images; `⌊fraction · M⌋` target points are
/// then replaced by uniform pixels away from their epipolar line.
pub fn project_correspondences(
    scene: &SyntheticScene,
    src: &Frame,
    tgt: &Frame,
    noise_sigma: f64,
    outlier_fraction: f64,
    seed: u64,
) -> Result<SyntheticMatches, SynthError> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SynthError::InvalidSpec(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    if !(0.0..=1.0).contains(&outlier_fraction) {
        return Err(SynthError::InvalidSpec(format!("outlier fraction must lie in [0, 1], got {outlier_fraction}")));
    }
    let ki = src.intrinsics.ok_or(SynthError::MissingIntrinsics(src.index))?;
    let kj = tgt.intrinsics.ok_or(SynthError::MissingIntrinsics(tgt.index))?;
    let (inv_i, inv_j) = (src.pose.inverse(), tgt.pose.inverse());
    let project = |inv: &Pose, k: &Intrinsics, p: &Point3<f64>| {
        let c = inv.transform_point(p);
        (c.z > MIN_CAMERA_DEPTH).then(|| k.denormalize(c.x / c.z, c.y / c.z)).filter(|px| k.contains(px))
    };
    let mut points: Vec<Correspondence> = scene
        .points
        .iter()
        .filter_map(|p| {
            let p = Point3::from(*p);
            let a = project(&inv_i, &ki, &p)?;
            let b = project(&inv_j, &kj, &p)?;
            Some(Correspondence { src: a, tgt: b })
        })
        .collect();
    let m = points.len();
    if m < MIN_VISIBLE {
        return Err(SynthError::TooFewVisible { visible: m });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("sigma is finite and positive");
        for c in &mut points {
            c.src.u += normal.sample(&mut rng);
            c.src.v += normal.sample(&mut rng);
            c.tgt.u += normal.sample(&mut rng);
            c.tgt.v += normal.sample(&mut rng);
        }
    }

    // The epsilon keeps products like 0.57 · 100 from flooring one short.
    let n_out = ((outlier_fraction * m as f64) + 1e-9).floor() as usize;
    let mut outlier = vec![false; m];
    let e = EssentialMatrix::from_relative_pose(&relative_pose(&src.pose, &tgt.pose));
    for i in index::sample(&mut rng, m, n_out.min(m)).into_iter() {
        outlier[i] = true;
        let line = e.matrix() * ki.normalize(&points[i].src);
        let mut candidate = points[i].tgt;
        for _ in 0..100 {
            candidate.u = rng.random_range(0.0..f64::from(kj.width));
            candidate.v = rng.random_range(0.0..f64::from(kj.height));
            let x = kj.normalize(&candidate);
            let dist_px = line.dot(&x).abs() / line.xy().norm() * kj.fx.min(kj.fy);
            if dist_px >= OUTLIER_MIN_OFFSET_PX {
                break;
            }
        }
        points[i].tgt = candidate;
    }
    Ok(SyntheticMatches { points, outlier })
}

/// Writes `manifest.json`, depth PNGs, flat placeholder images and
/// `scene.json` under `dir`.
pub fn write_sequence(seq: &SequenceManifest, scene: &SyntheticScene, dir: &Path) -> Result<PathBuf, SynthError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut placeholder_bytes: Option<Vec<u8>> = None;
    for f in &seq.frames {
        let path = dir.join(&f.image);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let bytes = placeholder_bytes.get_or_insert_with(|| {
            let k = f.intrinsics.unwrap_or_else(synthetic_intrinsics);
            let img = GrayImage::from_pixel(k.width, k.height, Luma([128u8]));
            let mut out = Vec::new();
            img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png).expect("in-memory png encode");
            out
        });
        atomic_write(&path, bytes).map_err(io_err(&path))?;
    }
    let manifest = dir.join("manifest.json");
    write_manifest(seq, &manifest)?;
    let scene_path = dir.join("scene.json");
    atomic_write(&scene_path, scene.to_json().as_bytes()).map_err(io_err(&scene_path))?;
    Ok(manifest)
}
