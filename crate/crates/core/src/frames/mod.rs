//! Posed RGB-D frame sequences.

mod manifest;
pub mod profile;

use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::{GeometryError, Intrinsics, Pose};

pub use manifest::{
    load_manifest, load_manifest_file, parse_pose_text, pose_from_row_major, read_depth_png, write_depth_png,
    write_manifest, FrameRecord, ManifestFile, Requirement,
};
pub use profile::{ingest, Profile, ProfileConfig};

#[derive(Debug, Error)]
pub enum FramesError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("malformed pose for frame {frame}: {reason}")]
    MalformedPose { frame: u64, reason: String },
    #[error("inconsistent intrinsics for frame {frame}: {reason}")]
    InconsistentIntrinsics { frame: u64, reason: String },
    #[error("frame {frame} has no {channel}, which this pipeline requires")]
    MissingChannel { frame: u64, channel: &'static str },
    #[error("frame {0} has no valid depth at its center pixel")]
    MissingDepth(u64),
    #[error("frame indices must be strictly increasing ({prev} then {next})")]
    UnorderedFrames { prev: u64, next: u64 },
    #[error("unknown dataset profile {0:?}")]
    UnknownProfile(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("depth image {path}: {reason}")]
    BadDepthImage { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl FramesError {
    pub fn is_io(&self) -> bool {
        matches!(self, FramesError::Io { .. } | FramesError::MissingFile(_))
    }
}

/// Single-channel depth image. Raw value 0 marks missing depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub raw: Vec<u16>,
    /// Raw units per metric unit (1000 for millimetre storage of metres).
    pub depth_scale: f64,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, raw: Vec<u16>, depth_scale: f64) -> Self {
        assert_eq!(raw.len(), width as usize * height as usize, "depth buffer size mismatch");
        Self { width, height, raw, depth_scale }
    }

    pub fn raw_at(&self, x: u32, y: u32) -> u16 {
        self.raw[y as usize * self.width as usize + x as usize]
    }

    /// Metric depth at an integer pixel; `None` for invalid samples.
    pub fn metric_at(&self, x: u32, y: u32) -> Option<f64> {
        match self.raw_at(x, y) {
            0 => None,
            r => Some(f64::from(r) / self.depth_scale),
        }
    }

    /// Nearest-pixel lookup of a continuous pixel coordinate.
    pub fn sample_nearest(&self, u: f64, v: f64) -> Option<f64> {
        let (x, y) = (u.round(), v.round());
        if x < 0.0 || y < 0.0 || x >= f64::from(self.width) || y >= f64::from(self.height) {
            return None;
        }
        self.metric_at(x as u32, y as u32)
    }

    /// Quantizes a metric depth to raw storage units. Out-of-range or
    /// non-positive depths map to 0.
    pub fn quantize(metric: f64, depth_scale: f64) -> u16 {
        let raw = (metric * depth_scale).round();
        if raw.is_finite() && raw >= 1.0 && raw <= f64::from(u16::MAX) {
            raw as u16
        } else {
            0
        }
    }
}

/// One posed observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    /// RGB image path as written in the manifest. Never decoded.
    pub image: PathBuf,
    pub depth_path: Option<PathBuf>,
    pub depth: Option<DepthMap>,
    pub intrinsics: Option<Intrinsics>,
    /// Camera-to-world.
    pub pose: Pose,
}

/// A loaded sequence; all frames share one world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub sequence: String,
    pub profile: String,
    pub depth_scale: f64,
    pub frames: Vec<Frame>,
}

impl SequenceManifest {
    pub fn frame_by_index(&self, index: u64) -> Option<&Frame> {
        self.frames.binary_search_by_key(&index, |f| f.index).ok().map(|i| &self.frames[i])
    }

    /// Checks that every frame carries what Bench curation needs.
    pub fn require_depth_channel(&self) -> Result<(), FramesError> {
        for f in &self.frames {
            if f.depth.is_none() {
                return Err(FramesError::MissingChannel { frame: f.index, channel: "depth map" });
            }
            if f.intrinsics.is_none() {
                return Err(FramesError::MissingChannel { frame: f.index, channel: "intrinsics" });
            }
        }
        Ok(())
    }
}

/// Metric depth at the image center, `(width / 2, height / 2)`.
pub fn center_depth(frame: &Frame) -> Result<f64, FramesError> {
    let depth = frame.depth.as_ref().ok_or(FramesError::MissingDepth(frame.index))?;
    depth.metric_at(depth.width / 2, depth.height / 2).ok_or(FramesError::MissingDepth(frame.index))
}

impl From<(u64, GeometryError)> for FramesError {
    fn from((frame, e): (u64, GeometryError)) -> Self {
        match e {
            GeometryError::InvalidIntrinsics(reason) => FramesError::InconsistentIntrinsics { frame, reason },
            other => FramesError::MalformedPose { frame, reason: other.to_string() },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_with(depth: DepthMap) -> Frame {
        Frame {
            index: 0,
            image: "rgb.png".into(),
            depth_path: None,
            depth: Some(depth),
            intrinsics: None,
            pose: Pose::identity(),
        }
    }

    #[test]
    fn uniform_depth_center() {
        let d = DepthMap::new(8, 6, vec![2000; 48], 1000.0);
        assert_eq!(center_depth(&frame_with(d)).unwrap(), 2.0);
    }

    #[test]
    fn zero_center_is_missing() {
        let mut d = DepthMap::new(8, 6, vec![2000; 48], 1000.0);
        d.raw[3 * 8 + 4] = 0;
        assert!(matches!(center_depth(&frame_with(d)), Err(FramesError::MissingDepth(0))));
    }

    #[test]
    fn no_depth_map_is_missing() {
        let mut f = frame_with(DepthMap::new(1, 1, vec![1], 1.0));
        f.depth = None;
        assert!(matches!(center_depth(&f), Err(FramesError::MissingDepth(0))));
    }

    #[test]
    fn quantize_range() {
        assert_eq!(DepthMap::quantize(2.0004, 1000.0), 2000);
        assert_eq!(DepthMap::quantize(-1.0, 1000.0), 0);
        assert_eq!(DepthMap::quantize(70.0, 1000.0), 0);
        assert_eq!(DepthMap::quantize(f64::NAN, 1000.0), 0);
    }

    #[test]
    fn nearest_lookup_rounds() {
        let raw = (0..4u16).map(|v| v + 1).collect();
        let d = DepthMap::new(2, 2, raw, 1.0);
        assert_eq!(d.sample_nearest(0.4, 0.6), Some(3.0));
        assert_eq!(d.sample_nearest(2.0, 0.0), None);
    }
}
