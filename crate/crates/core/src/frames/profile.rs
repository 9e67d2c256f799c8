//! Dataset profiles: thin adapters from native on-disk layouts to manifests.
//!
//! | profile     | layout                                                              | channels         |
//! |-------------|---------------------------------------------------------------------|------------------|
//! | `synthetic` | native manifest written by [`crate::synth`]                         | all              |
//! | `7scenes`   | `frame-NNNNNN.color.png`, `.depth.png`, `.pose.txt` in one folder   | all              |
//! | `scannet`   | `color/N.jpg`, `depth/N.png`, `pose/N.txt`, `intrinsic/intrinsic_depth.txt` | all      |
//! | `scannetpp` | `images/<stem>.{jpg,png}`, `poses/<stem>.txt`                       | pose only (Diag) |
//!
//! Camera constants are profile defaults and can be overridden field by field.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::manifest::{parse_pose_text, pose_from_row_major};
use super::{FrameRecord, FramesError, ManifestFile};
use crate::geometry::Intrinsics;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Synthetic,
    SevenScenes,
    ScanNet,
    ScanNetPP,
}

impl Profile {
    pub const ALL: [Profile; 4] = [Profile::Synthetic, Profile::SevenScenes, Profile::ScanNet, Profile::ScanNetPP];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Synthetic => "synthetic",
            Profile::SevenScenes => "7scenes",
            Profile::ScanNet => "scannet",
            Profile::ScanNetPP => "scannetpp",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, FramesError> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| FramesError::UnknownProfile(name.to_string()))
    }

    pub fn default_config(self) -> ProfileConfig {
        match self {
            Profile::Synthetic => ProfileConfig {
                fx: Some(525.0),
                fy: Some(525.0),
                cx: Some(320.0),
                cy: Some(240.0),
                width: Some(640),
                height: Some(480),
                depth_scale: Some(1000.0),
            },
            Profile::SevenScenes => ProfileConfig {
                fx: Some(585.0),
                fy: Some(585.0),
                cx: Some(320.0),
                cy: Some(240.0),
                width: Some(640),
                height: Some(480),
                depth_scale: Some(1000.0),
            },
            Profile::ScanNet => ProfileConfig {
                fx: Some(577.870605),
                fy: Some(577.870605),
                cx: Some(319.5),
                cy: Some(239.5),
                width: Some(640),
                height: Some(480),
                depth_scale: Some(1000.0),
            },
            Profile::ScanNetPP => ProfileConfig { depth_scale: Some(1000.0), ..ProfileConfig::default() },
        }
    }
}

/// Per-field camera overrides. `None` falls back to the profile default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub depth_scale: Option<f64>,
}

impl ProfileConfig {
    pub fn or(self, fallback: ProfileConfig) -> ProfileConfig {
        ProfileConfig {
            fx: self.fx.or(fallback.fx),
            fy: self.fy.or(fallback.fy),
            cx: self.cx.or(fallback.cx),
            cy: self.cy.or(fallback.cy),
            width: self.width.or(fallback.width),
            height: self.height.or(fallback.height),
            depth_scale: self.depth_scale.or(fallback.depth_scale),
        }
    }

    fn intrinsics(&self) -> Option<Intrinsics> {
        Some(Intrinsics {
            fx: self.fx?,
            fy: self.fy?,
            cx: self.cx?,
            cy: self.cy?,
            width: self.width?,
            height: self.height?,
        })
    }
}

/// Builds a manifest from a dataset folder in its native layout.
pub fn ingest(
    profile: Profile,
    dir: &Path,
    sequence: &str,
    overrides: ProfileConfig,
) -> Result<ManifestFile, FramesError> {
    let cfg = overrides.or(profile.default_config());
    let root = fs::canonicalize(dir).map_err(|source| FramesError::Io { path: dir.to_path_buf(), source })?;
    let (frames, depth_invalid) = match profile {
        Profile::Synthetic => {
            return Err(FramesError::InvalidManifest(
                "synthetic sequences are already manifests; load them directly".into(),
            ))
        }
        Profile::SevenScenes => (ingest_seven_scenes(&root, &cfg)?, Some(u16::MAX)),
        Profile::ScanNet => (ingest_scannet(&root, &overrides)?, None),
        Profile::ScanNetPP => (ingest_scannetpp(&root)?, None),
    };
    Ok(ManifestFile {
        sequence: sequence.to_string(),
        profile: profile.name().to_string(),
        depth_scale: cfg.depth_scale.unwrap_or(1000.0),
        root: Some(root),
        depth_invalid,
        frames,
    })
}

fn list_dir(dir: &Path) -> Result<Vec<String>, FramesError> {
    let entries = fs::read_dir(dir).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            FramesError::MissingFile(dir.to_path_buf())
        } else {
            FramesError::Io { path: dir.to_path_buf(), source }
        }
    })?;
    let mut names = Vec::new();
    for e in entries {
        let e = e.map_err(|source| FramesError::Io { path: dir.to_path_buf(), source })?;
        if let Some(name) = e.file_name().to_str() {
            names.push(name.to_string());
        }
    }
    names.sort();
    Ok(names)
}

fn digits(s: &str) -> Option<u64> {
    let d: String = s.chars().filter(char::is_ascii_digit).collect();
    d.parse().ok()
}

/// Reads a pose file; returns `None` (with a warning) for the invalid poses
/// some datasets store as `inf`/`nan`.
fn read_pose(path: &Path, index: u64) -> Result<Option<[f64; 16]>, FramesError> {
    let text = fs::read_to_string(path).map_err(|source| FramesError::Io { path: path.to_path_buf(), source })?;
    let m = parse_pose_text(&text).map_err(|reason| FramesError::MalformedPose { frame: index, reason })?;
    if m.iter().any(|v| !v.is_finite()) {
        warn!("skipping frame {index}: pose file {} has non-finite entries", path.display());
        return Ok(None);
    }
    pose_from_row_major(&m).map_err(|reason| FramesError::MalformedPose { frame: index, reason })?;
    Ok(Some(m))
}

fn require_intrinsics(cfg: &ProfileConfig) -> Result<Intrinsics, FramesError> {
    let k = cfg.intrinsics().ok_or_else(|| FramesError::InconsistentIntrinsics {
        frame: 0,
        reason: "profile has no complete intrinsics (fx, fy, cx, cy, width, height)".into(),
    })?;
    k.validate().map_err(|e| (0, e))?;
    Ok(k)
}

fn ingest_seven_scenes(root: &Path, cfg: &ProfileConfig) -> Result<Vec<FrameRecord>, FramesError> {
    let k = require_intrinsics(cfg)?;
    let mut frames = Vec::new();
    for name in list_dir(root)? {
        let Some(stem) = name.strip_suffix(".pose.txt") else { continue };
        let Some(index) = digits(stem) else { continue };
        let image = PathBuf::from(format!("{stem}.color.png"));
        let depth = PathBuf::from(format!("{stem}.depth.png"));
        for p in [&image, &depth] {
            if !root.join(p).is_file() {
                return Err(FramesError::MissingFile(root.join(p)));
            }
        }
        if let Some(pose) = read_pose(&root.join(&name), index)? {
            frames.push(FrameRecord { index, image, depth: Some(depth), intrinsics: Some(k), pose });
        }
    }
    frames.sort_by_key(|f| f.index);
    Ok(frames)
}

/// Reads ScanNet's `intrinsic_depth.txt` (4×4, row-major). Explicit
/// overrides beat the file, which beats the profile defaults.
fn scannet_intrinsics(root: &Path, overrides: &ProfileConfig) -> Result<Intrinsics, FramesError> {
    let defaults = Profile::ScanNet.default_config();
    let path = root.join("intrinsic").join("intrinsic_depth.txt");
    let from_file = match fs::read_to_string(&path) {
        Ok(text) => {
            let m =
                parse_pose_text(&text).map_err(|reason| FramesError::InconsistentIntrinsics { frame: 0, reason })?;
            ProfileConfig { fx: Some(m[0]), fy: Some(m[5]), cx: Some(m[2]), cy: Some(m[6]), ..ProfileConfig::default() }
        }
        Err(_) => ProfileConfig::default(),
    };
    require_intrinsics(&overrides.or(from_file).or(defaults))
}

fn ingest_scannet(root: &Path, overrides: &ProfileConfig) -> Result<Vec<FrameRecord>, FramesError> {
    let k = scannet_intrinsics(root, overrides)?;
    let mut frames = Vec::new();
    for name in list_dir(&root.join("pose"))? {
        let Some(stem) = name.strip_suffix(".txt") else { continue };
        let Ok(index) = stem.parse::<u64>() else { continue };
        let image = PathBuf::from("color").join(format!("{stem}.jpg"));
        let depth = PathBuf::from("depth").join(format!("{stem}.png"));
        for p in [&image, &depth] {
            if !root.join(p).is_file() {
                return Err(FramesError::MissingFile(root.join(p)));
            }
        }
        if let Some(pose) = read_pose(&root.join("pose").join(&name), index)? {
            frames.push(FrameRecord { index, image, depth: Some(depth), intrinsics: Some(k), pose });
        }
    }
    frames.sort_by_key(|f| f.index);
    Ok(frames)
}

fn ingest_scannetpp(root: &Path) -> Result<Vec<FrameRecord>, FramesError> {
    let images = list_dir(&root.join("images"))?;
    let mut frames = Vec::new();
    for name in list_dir(&root.join("poses"))? {
        let Some(stem) = name.strip_suffix(".txt") else { continue };
        let Some(index) = digits(stem) else { continue };
        let image = ["jpg", "JPG", "png"]
            .iter()
            .map(|ext| format!("{stem}.{ext}"))
            .find(|candidate| images.contains(candidate))
            .ok_or_else(|| FramesError::MissingFile(root.join("images").join(format!("{stem}.jpg"))))?;
        if let Some(pose) = read_pose(&root.join("poses").join(&name), index)? {
            frames.push(FrameRecord {
                index,
                image: PathBuf::from("images").join(image),
                depth: None,
                intrinsics: None,
                pose,
            });
        }
    }
    frames.sort_by_key(|f| f.index);
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{load_manifest_file, write_depth_png, DepthMap, Requirement};

    const IDENTITY: &str = "1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";

    #[test]
    fn profile_names_round_trip() {
        for p in Profile::ALL {
            assert_eq!(Profile::from_name(p.name()).unwrap(), p);
        }
        assert!(Profile::from_name("kitti").is_err());
    }

    #[test]
    fn seven_scenes_layout() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for i in [2u64, 0, 1] {
            fs::write(root.join(format!("frame-{i:06}.color.png")), b"").unwrap();
            let mut raw = vec![1500u16; 640 * 480];
            raw[240 * 640 + 320] = if i == 1 { u16::MAX } else { 1500 };
            write_depth_png(&root.join(format!("frame-{i:06}.depth.png")), &DepthMap::new(640, 480, raw, 1000.0))
                .unwrap();
            fs::write(root.join(format!("frame-{i:06}.pose.txt")), IDENTITY).unwrap();
        }
        let file =
            ingest(Profile::SevenScenes, root, "chess-01", ProfileConfig { fx: Some(500.0), ..Default::default() })
                .unwrap();
        assert_eq!(file.frames.iter().map(|f| f.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(file.frames[0].intrinsics.unwrap().fx, 500.0);
        assert_eq!(file.frames[0].intrinsics.unwrap().fy, 585.0);

        let seq = load_manifest_file(file, Path::new("/nonexistent"), Requirement::Bench).unwrap();
        assert_eq!(crate::frames::center_depth(&seq.frames[0]).unwrap(), 1.5);
        // 65535 is the dataset's invalid marker
        assert!(crate::frames::center_depth(&seq.frames[1]).is_err());
    }

    #[test]
    fn scannet_skips_invalid_poses_and_reads_intrinsics() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for sub in ["color", "depth", "pose", "intrinsic"] {
            fs::create_dir(root.join(sub)).unwrap();
        }
        fs::write(root.join("intrinsic/intrinsic_depth.txt"), "570 0 310 0\n0 571 235 0\n0 0 1 0\n0 0 0 1\n").unwrap();
        for i in 0..3u64 {
            fs::write(root.join(format!("color/{i}.jpg")), b"").unwrap();
            write_depth_png(&root.join(format!("depth/{i}.png")), &DepthMap::new(640, 480, vec![1; 640 * 480], 1000.0))
                .unwrap();
            let pose = if i == 1 { "-inf ".repeat(16) } else { IDENTITY.to_string() };
            fs::write(root.join(format!("pose/{i}.txt")), pose).unwrap();
        }
        let file = ingest(Profile::ScanNet, root, "scene0000_00", ProfileConfig::default()).unwrap();
        assert_eq!(file.frames.iter().map(|f| f.index).collect::<Vec<_>>(), vec![0, 2]);
        let k = file.frames[0].intrinsics.unwrap();
        assert_eq!((k.fx, k.fy, k.cx, k.cy), (570.0, 571.0, 310.0, 235.0));
    }

    #[test]
    fn scannetpp_is_pose_only() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir(root.join("images")).unwrap();
        fs::create_dir(root.join("poses")).unwrap();
        fs::write(root.join("images/frame_000010.jpg"), b"").unwrap();
        fs::write(root.join("poses/frame_000010.txt"), IDENTITY).unwrap();
        let file = ingest(Profile::ScanNetPP, root, "pp", ProfileConfig::default()).unwrap();
        assert_eq!(file.frames.len(), 1);
        assert_eq!(file.frames[0].index, 10);
        let base = Path::new("/");
        assert!(load_manifest_file(file.clone(), base, Requirement::Diag).is_ok());
        assert!(matches!(load_manifest_file(file, base, Requirement::Bench), Err(FramesError::MissingChannel { .. })));
    }
}
