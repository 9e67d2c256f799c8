//! Curation, geometric solving and scoring of relative camera pose benchmarks
//! built from posed RGB-D sequences.
//!
//! * [`geometry`]: SE(3), pitch/yaw/roll extraction and pinhole projection.
//! * [`frames`]: sequence manifests, depth maps and dataset profiles.
//! * [`curation`]: viewpoint-angle (Bench) and single-DoF (Diag) pair filters.
//! * [`solver`]: eight-point + RANSAC essential-matrix baseline.
//! * [`synth`]: synthetic scenes and trajectories with exact ground truth.
//! * [`evalkit`]: macro-F1 and swap-consistency scoring.

// Comparisons are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curation;
pub mod evalkit;
pub mod frames;
pub mod geometry;
pub mod io;
pub mod solver;
pub mod synth;
