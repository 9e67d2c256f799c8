//! Two-view relative pose from pixel correspondences.
//!
//! Pipeline: normalized eight-point essential matrix inside RANSAC, then the
//! four-way `(R, ±t)` decomposition resolved by cheirality. Translation comes
//! back as a unit vector since an essential matrix carries no scale.

mod decompose;
mod eight_point;
mod ransac;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{bench_label_index, ClassifyRule, CurationError};
use crate::geometry::{skew, GeometryError, Intrinsics, PixelPoint, Pose, PoseVector, RotationMatrix};

pub use decompose::{count_in_front, decompose_essential, triangulate_depths};
pub use eight_point::eight_point_essential;
pub use ransac::{ransac_essential, symmetric_epipolar_distance, RansacConfig};

/// Smallest magnitude of the governing pose component that `classify_pair` will sign.
pub const MIN_CLASSIFY_MAGNITUDE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("need at least 8 correspondences, got {0}")]
    InsufficientPoints(usize),
    #[error("correspondences are degenerate (pure rotation, planar or repeated points)")]
    DegenerateConfiguration,
    #[error("no consensus: best hypothesis has {0} inliers")]
    NoConsensus(usize),
    #[error("cheirality test is ambiguous: best candidate has {best} of {total} points in front")]
    CheiralityAmbiguous { best: usize, total: usize },
    #[error("invalid RANSAC configuration: {0}")]
    InvalidConfig(String),
    #[error("motion is ambiguous under the {rule:?} rule (governing component {value})")]
    AmbiguousMotion { rule: ClassifyRule, value: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("correspondence file: {0}")]
    Parse(String),
}

/// A matched pixel pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src: PixelPoint,
    pub tgt: PixelPoint,
}

impl Correspondence {
    pub fn new(u1: f64, v1: f64, u2: f64, v2: f64) -> Self {
        Self { src: PixelPoint::new(u1, v1), tgt: PixelPoint::new(u2, v2) }
    }

    pub fn swapped(&self) -> Self {
        Self { src: self.tgt, tgt: self.src }
    }

    pub fn is_finite(&self) -> bool {
        [self.src.u, self.src.v, self.tgt.u, self.tgt.v].iter().all(|v| v.is_finite())
    }
}

/// Essential matrix `E` with `x_tgtᵀ E x_src = 0` in normalized coordinates.
///
/// `E = [t]× R` where `x_tgt ~ R x_src + t` maps source-camera points into
/// the target camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(pub Matrix3<f64>);

impl EssentialMatrix {
    /// Ground-truth essential matrix for a relative camera pose (target in source frame).
    pub fn from_relative_pose(rel: &Pose) -> Self {
        let r = rel.rotation.transpose();
        let t = -(r * rel.translation);
        Self(skew(&t) * r.matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Algebraic residual `x_tgtᵀ E x_src` for normalized points.
    pub fn residual(&self, x_src: &Vector2<f64>, x_tgt: &Vector2<f64>) -> f64 {
        x_tgt.push(1.0).dot(&(self.0 * x_src.push(1.0)))
    }

    /// Singular values sorted descending.
    pub fn singular_values(&self) -> [f64; 3] {
        let mut s: Vec<f64> = self.0.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        [s[0], s[1], s[2]]
    }

    /// Rank 2 with two equal singular values, both within `1e-6` relative.
    pub fn satisfies_constraints(&self) -> bool {
        let [a, b, c] = self.singular_values();
        a > 0.0 && c < 1e-6 * a && (a - b).abs() <= 1e-6 * a
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }
}

/// Pixel correspondences mapped to normalized image coordinates.
pub(crate) fn normalize_all(
    pts: &[Correspondence],
    k_src: &Intrinsics,
    k_tgt: &Intrinsics,
) -> Vec<(Vector2<f64>, Vector2<f64>)> {
    pts.iter().map(|c| (k_src.normalize(&c.src).xy(), k_tgt.normalize(&c.tgt).xy())).collect()
}

/// Result of the full two-view pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativePoseEstimate {
    pub essential: EssentialMatrix,
    pub inliers: Vec<bool>,
    /// Rotation taking source-camera points into the target camera.
    pub rotation: RotationMatrix,
    /// Unit translation in the same convention as `rotation`.
    pub translation: Vector3<f64>,
}

impl RelativePoseEstimate {
    /// Target camera pose in the source camera frame, with unit-length translation.
    pub fn relative_pose(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt * self.translation))
    }

    pub fn pose_vector(&self) -> Result<PoseVector, GeometryError> {
        PoseVector::from_relative(&self.relative_pose())
    }

    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|b| **b).count()
    }
}

/// RANSAC essential matrix followed by cheirality-resolved decomposition on its inliers.
pub fn estimate_relative_pose(
    pts: &[Correspondence],
    k_src: &Intrinsics,
    k_tgt: &Intrinsics,
    cfg: &RansacConfig,
) -> Result<RelativePoseEstimate, SolverError> {
    let (essential, inliers) = ransac_essential(pts, k_src, k_tgt, cfg)?;
    let inlier_pts: Vec<Correspondence> = pts.iter().zip(&inliers).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
    let (rotation, translation) = decompose_essential(&essential, &inlier_pts, k_src, k_tgt)?;
    Ok(RelativePoseEstimate { essential, inliers, rotation, translation })
}

/// Binary Bench label of a (predicted or ground-truth) pose vector.
pub fn classify_pair(v: &PoseVector, rule: ClassifyRule) -> Result<u8, SolverError> {
    bench_label_index(v, rule, MIN_CLASSIFY_MAGNITUDE).map_err(|e| match e {
        CurationError::AmbiguousMotion { rule, value } => SolverError::AmbiguousMotion { rule, value },
        other => unreachable!("bench_label_index only reports ambiguity, got {other}"),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    u1: f64,
    v1: f64,
    u2: f64,
    v2: f64,
}

/// Parses `u1,v1,u2,v2` CSV (header required).
pub fn read_correspondences_csv(text: &str) -> Result<Vec<Correspondence>, SolverError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| SolverError::Parse(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["u1", "v1", "u2", "v2"] {
        return Err(SolverError::Parse(format!(
            "expected header u1,v1,u2,v2, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (n, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let r = row.map_err(|e| SolverError::Parse(format!("row {}: {e}", n + 1)))?;
        let c = Correspondence::new(r.u1, r.v1, r.u2, r.v2);
        if !c.is_finite() {
            return Err(SolverError::Parse(format!("row {}: non-finite coordinate", n + 1)));
        }
        out.push(c);
    }
    Ok(out)
}

pub fn write_correspondences_csv(pts: &[Correspondence]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in pts {
        w.serialize(CsvRow { u1: c.src.u, v1: c.src.v, u2: c.tgt.u, v2: c.tgt.v }).expect("in-memory csv");
    }
    if pts.is_empty() {
        return "u1,v1,u2,v2\n".to_string();
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}
