use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{DepthMap, Frame, FramesError, Profile, SequenceManifest};
use crate::geometry::{orthonormality_error, Intrinsics, Pose, RotationMatrix};
use crate::io::atomic_write;

/// Rotation drift accepted as-is.
const DRIFT_KEEP: f64 = 1e-6;
/// Rotation drift above which a pose is rejected rather than repaired.
const DRIFT_REJECT: f64 = 1e-3;

/// On-disk sequence manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub sequence: String,
    pub profile: String,
    pub depth_scale: f64,
    /// Base directory for relative frame paths; defaults to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    /// Raw depth value that the source dataset uses for "no reading", mapped to 0 on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_invalid: Option<u16>,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub index: u64,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<Intrinsics>,
    /// Camera-to-world homogeneous matrix, row-major.
    pub pose: [f64; 16],
}

/// Which channels a consumer needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    /// Depth and intrinsics on every frame.
    Bench,
    /// Pose only.
    Diag,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FramesError + '_ {
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            FramesError::MissingFile(path.to_path_buf())
        } else {
            FramesError::Io { path: path.to_path_buf(), source }
        }
    }
}

pub fn load_manifest(path: &Path, requirement: Requirement) -> Result<SequenceManifest, FramesError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: ManifestFile =
        serde_json::from_str(&text).map_err(|e| FramesError::InvalidManifest(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_manifest_file(file, &base, requirement)
}

/// Validates an in-memory manifest document. Relative paths resolve against
/// `root` when set, else against `base`.
pub fn load_manifest_file(
    file: ManifestFile,
    base: &Path,
    requirement: Requirement,
) -> Result<SequenceManifest, FramesError> {
    Profile::from_name(&file.profile)?;
    if !(file.depth_scale.is_finite() && file.depth_scale > 0.0) {
        return Err(FramesError::InvalidManifest(format!("depth_scale must be positive, got {}", file.depth_scale)));
    }
    let root = match &file.root {
        Some(r) if r.is_absolute() => r.clone(),
        Some(r) => base.join(r),
        None => base.to_path_buf(),
    };

    let mut frames = Vec::with_capacity(file.frames.len());
    let mut prev: Option<u64> = None;
    for rec in file.frames {
        if let Some(p) = prev {
            if rec.index <= p {
                return Err(FramesError::UnorderedFrames { prev: p, next: rec.index });
            }
        }
        prev = Some(rec.index);

        let image_path = root.join(&rec.image);
        if !image_path.is_file() {
            return Err(FramesError::MissingFile(image_path));
        }
        let pose =
            pose_from_row_major(&rec.pose).map_err(|reason| FramesError::MalformedPose { frame: rec.index, reason })?;
        if let Some(k) = &rec.intrinsics {
            k.validate().map_err(|e| (rec.index, e))?;
        }
        let depth = match &rec.depth {
            Some(rel) => {
                let mut map = read_depth_png(&root.join(rel), file.depth_scale)?;
                if let Some(invalid) = file.depth_invalid {
                    map.raw.iter_mut().filter(|v| **v == invalid).for_each(|v| *v = 0);
                }
                if let Some(k) = &rec.intrinsics {
                    if (k.width, k.height) != (map.width, map.height) {
                        return Err(FramesError::InconsistentIntrinsics {
                            frame: rec.index,
                            reason: format!(
                                "intrinsics are for {}x{} but depth map is {}x{}",
                                k.width, k.height, map.width, map.height
                            ),
                        });
                    }
                }
                Some(map)
            }
            None => None,
        };
        if requirement == Requirement::Bench {
            if depth.is_none() {
                return Err(FramesError::MissingChannel { frame: rec.index, channel: "depth map" });
            }
            if rec.intrinsics.is_none() {
                return Err(FramesError::MissingChannel { frame: rec.index, channel: "intrinsics" });
            }
        }
        frames.push(Frame {
            index: rec.index,
            image: rec.image,
            depth_path: rec.depth,
            depth,
            intrinsics: rec.intrinsics,
            pose,
        });
    }
    Ok(SequenceManifest { sequence: file.sequence, profile: file.profile, depth_scale: file.depth_scale, frames })
}

/// Parses a 4×4 homogeneous camera-to-world matrix, repairing small rotation drift.
pub fn pose_from_row_major(m: &[f64; 16]) -> Result<Pose, String> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err("non-finite entry".into());
    }
    let bottom = [m[12], m[13], m[14], m[15]];
    let expected = [0.0, 0.0, 0.0, 1.0];
    if bottom.iter().zip(expected).any(|(a, b)| (a - b).abs() > DRIFT_KEEP) {
        return Err(format!("bottom row {bottom:?} is not (0, 0, 0, 1)"));
    }
    let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
    let det = r.determinant();
    if det <= 0.0 {
        return Err(format!("rotation block has determinant {det}"));
    }
    let drift = orthonormality_error(&r).max((det - 1.0).abs());
    let rotation = if drift <= DRIFT_KEEP {
        RotationMatrix::from_matrix_unchecked(r)
    } else if drift <= DRIFT_REJECT {
        nearest_rotation(&r)
    } else {
        return Err(format!("rotation block drift {drift:.3e} exceeds {DRIFT_REJECT:e}"));
    };
    Ok(Pose::new(rotation, Vector3::new(m[3], m[7], m[11])))
}

/// Closest rotation in the Frobenius sense.
fn nearest_rotation(m: &Matrix3<f64>) -> RotationMatrix {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    RotationMatrix::from_matrix_unchecked(u * d * vt)
}

/// Parses the 16 whitespace-separated numbers of a pose text file.
pub fn parse_pose_text(text: &str) -> Result<[f64; 16], String> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    values.try_into().map_err(|v: Vec<f64>| format!("expected 16 numbers, found {}", v.len()))
}

pub fn read_depth_png(path: &Path, depth_scale: f64) -> Result<DepthMap, FramesError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| FramesError::BadDepthImage { path: path.to_path_buf(), reason: e.to_string() })?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            Ok(DepthMap::new(w, h, buf.into_raw(), depth_scale))
        }
        other => Err(FramesError::BadDepthImage {
            path: path.to_path_buf(),
            reason: format!("expected single-channel 16-bit, found {:?}", other.color()),
        }),
    }
}

pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<(), FramesError> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(depth.width, depth.height, depth.raw.clone())
        .expect("depth buffer matches its dimensions");
    let mut bytes = Vec::new();
    buf.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| FramesError::BadDepthImage { path: path.to_path_buf(), reason: e.to_string() })?;
    atomic_write(path, &bytes).map_err(|source| FramesError::Io { path: path.to_path_buf(), source })
}

impl ManifestFile {
    pub fn from_sequence(seq: &SequenceManifest) -> Self {
        ManifestFile {
            sequence: seq.sequence.clone(),
            profile: seq.profile.clone(),
            depth_scale: seq.depth_scale,
            root: None,
            depth_invalid: None,
            frames: seq
                .frames
                .iter()
                .map(|f| FrameRecord {
                    index: f.index,
                    image: f.image.clone(),
                    depth: f.depth_path.clone(),
                    intrinsics: f.intrinsics,
                    pose: f.pose.to_row_major(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Writes `seq` as `path` plus any in-memory depth maps at their
/// manifest-relative paths. Frames without a `depth_path` keep no depth.
pub fn write_manifest(seq: &SequenceManifest, path: &Path) -> Result<(), FramesError> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for f in &seq.frames {
        if let (Some(rel), Some(depth)) = (&f.depth_path, &f.depth) {
            let target = base.join(rel);
            if let Some(dir) = target.parent() {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            write_depth_png(&target, depth)?;
        }
    }
    let json = ManifestFile::from_sequence(seq).to_json();
    atomic_write(path, json.as_bytes()).map_err(|source| FramesError::Io { path: path.to_path_buf(), source })
}
