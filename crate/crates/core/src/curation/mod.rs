//! Pair filters that turn a posed sequence into benchmark samples.
//!
//! *Bench* keeps pairs that look at the same central point from viewpoints
//! separated by a configured angle; *Diag* keeps pairs whose relative motion
//! is dominated by a single degree of freedom.

pub mod labels;
mod samples;

use std::collections::BTreeMap;

use log::debug;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{center_depth, Frame, FramesError, SequenceManifest};
use crate::geometry::{center_deviation, pose_vector, reproject, unproject, viewing_angle, GeometryError, PoseVector};

pub use labels::{
    bench_label_index, verbalize_bench, verbalize_diag, ClassifyRule, Dof, BENCH_OPTIONS, POSITIVE_YAW_OPTION,
};
pub use samples::{read_samples_jsonl, write_samples_jsonl, SampleRecord};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("sequence lacks a depth channel: {0}")]
    MissingDepthChannel(#[source] FramesError),
    #[error("motion is ambiguous under the {rule:?} rule (governing component {value})")]
    AmbiguousMotion { rule: ClassifyRule, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("frame {0} is not in the sequence")]
    UnknownFrame(u64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sample manifest line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Bench filter parameters. Angles in degrees, deviations in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub angle_bins: Vec<f64>,
    pub bin_width: f64,
    pub max_deviation: f64,
    pub min_gap: u64,
    pub max_gap: u64,
    pub per_bin_cap: usize,
    pub seed: u64,
    pub label_rule: ClassifyRule,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            angle_bins: vec![15.0, 30.0, 45.0, 60.0],
            bin_width: 5.0,
            max_deviation: 300.0,
            min_gap: 10,
            max_gap: 500,
            per_bin_cap: 100,
            seed: 0,
            label_rule: ClassifyRule::Yaw,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        let bad = |m: String| Err(CurationError::InvalidConfig(m));
        if self.angle_bins.is_empty() {
            return bad("at least one angle bin is required".into());
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return bad(format!("bin width must be positive, got {}", self.bin_width));
        }
        if self.angle_bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return bad("angle bins must be finite and non-negative".into());
        }
        for w in self.angle_bins.windows(2) {
            if !(w[0] + self.bin_width < w[1]) {
                return bad(format!(
                    "bins {} and {} overlap or are unsorted with width {}",
                    w[0], w[1], self.bin_width
                ));
            }
        }
        if !(self.max_deviation > 0.0) {
            return bad(format!("max deviation must be positive, got {}", self.max_deviation));
        }
        validate_gaps(self.min_gap, self.max_gap)?;
        if self.per_bin_cap < 1 {
            return bad("per-bin cap must be at least 1".into());
        }
        Ok(())
    }

    /// Lower edge of the bin containing `tau`, if any. Bins are closed intervals.
    pub fn bin_for(&self, tau: f64) -> Option<f64> {
        self.angle_bins.iter().copied().find(|lo| *lo <= tau && tau <= lo + self.bin_width)
    }
}

fn validate_gaps(min_gap: u64, max_gap: u64) -> Result<(), CurationError> {
    if min_gap < 1 || max_gap < min_gap {
        return Err(CurationError::InvalidConfig(format!(
            "frame gap window [{min_gap}, {max_gap}] needs 1 <= min_gap <= max_gap"
        )));
    }
    Ok(())
}

/// How the dominant DoF is compared against its `(lower, upper)` band. The
/// other five DoFs must stay below their lower threshold under either gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagGate {
    /// `lower < |v| <= upper`.
    #[default]
    Band,
    /// `|v| > upper`, with no upper bound.
    AboveUpper,
}

impl DiagGate {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "band" => Some(DiagGate::Band),
            "above-upper" => Some(DiagGate::AboveUpper),
            _ => None,
        }
    }
}

/// Per-DoF `(lower, upper)` bands. Rotations are stored in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagThresholds {
    lower: [f64; 6],
    upper: [f64; 6],
    gate: DiagGate,
}

impl DiagThresholds {
    /// Builds thresholds from config units: degrees for rotations, dataset
    /// units for translations, in `Dof::ALL` order.
    pub fn from_config_units(bands: [(f64, f64); 6]) -> Result<Self, CurationError> {
        let mut lower = [0.0; 6];
        let mut upper = [0.0; 6];
        for (dof, (lo, hi)) in Dof::ALL.into_iter().zip(bands) {
            if !(0.0 < lo && lo < hi && hi.is_finite()) {
                return Err(CurationError::InvalidConfig(format!(
                    "{} thresholds need 0 < lower < upper, got ({lo}, {hi})",
                    dof.name()
                )));
            }
            let (lo, hi) = if dof.is_rotation() { (lo.to_radians(), hi.to_radians()) } else { (lo, hi) };
            lower[dof.position()] = lo;
            upper[dof.position()] = hi;
        }
        Ok(Self { lower, upper, gate: DiagGate::default() })
    }

    pub fn with_gate(self, gate: DiagGate) -> Self {
        Self { gate, ..self }
    }

    pub fn gate(&self) -> DiagGate {
        self.gate
    }

    /// Whether a component of magnitude `value` can be the dominant one.
    pub fn qualifies(&self, dof: Dof, value: f64) -> bool {
        let a = value.abs();
        match self.gate {
            DiagGate::Band => a > self.lower(dof) && a <= self.upper(dof),
            DiagGate::AboveUpper => a > self.upper(dof),
        }
    }

    /// Bands in config units.
    pub fn to_config_units(&self) -> [(f64, f64); 6] {
        Dof::ALL.map(|d| {
            let (lo, hi) = (self.lower[d.position()], self.upper[d.position()]);
            if d.is_rotation() {
                (lo.to_degrees(), hi.to_degrees())
            } else {
                (lo, hi)
            }
        })
    }

    pub fn lower(&self, dof: Dof) -> f64 {
        self.lower[dof.position()]
    }

    pub fn upper(&self, dof: Dof) -> f64 {
        self.upper[dof.position()]
    }

    /// The single dominant DoF and its sign, if `v` passes the exclusivity test.
    pub fn dominant(&self, v: &PoseVector) -> Option<(Dof, i8)> {
        let c = v.components();
        let dof = Dof::ALL.into_iter().find(|d| self.qualifies(*d, c[d.position()]))?;
        let quiet = Dof::ALL.into_iter().filter(|d| *d != dof).all(|d| c[d.position()].abs() < self.lower(d));
        quiet.then(|| (dof, if c[dof.position()] > 0.0 { 1 } else { -1 }))
    }
}

impl Default for DiagThresholds {
    fn default() -> Self {
        Self::from_config_units([(5.0, 15.0), (5.0, 15.0), (3.0, 10.0), (0.15, 0.4), (0.1, 0.3), (0.15, 0.4)])
            .expect("default thresholds are valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagConfig {
    pub thresholds: DiagThresholds,
    pub min_gap: u64,
    pub max_gap: u64,
    pub per_dof_cap: usize,
    pub seed: u64,
}

impl Default for DiagConfig {
    fn default() -> Self {
        Self { thresholds: DiagThresholds::default(), min_gap: 10, max_gap: 500, per_dof_cap: 100, seed: 0 }
    }
}

impl DiagConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        validate_gaps(self.min_gap, self.max_gap)?;
        if self.per_dof_cap < 1 {
            return Err(CurationError::InvalidConfig("per-DoF cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Difficulty tag plus the measurements that justified keeping the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleTag {
    Bench {
        /// Lower edge of the viewpoint-angle bin, degrees.
        bin: f64,
        /// Viewpoint angle, degrees.
        tau: f64,
        /// Mean center-point deviation over both directions, pixels.
        mean_deviation: f64,
    },
    Diag {
        dof: Dof,
        sign: i8,
    },
}

/// A curated `(source, target)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub sequence: String,
    pub src_index: u64,
    pub tgt_index: u64,
    pub pose_vector: PoseVector,
    pub tag: SampleTag,
    pub label: String,
    pub label_index: u8,
}

impl PairSample {
    pub fn id(&self) -> String {
        format!("{}:{}-{}", self.sequence, self.src_index, self.tgt_index)
    }

    /// Grouping key for caps and reports: `"15"` style bin edges or DoF names.
    pub fn group(&self) -> String {
        match self.tag {
            SampleTag::Bench { bin, .. } => format_bin(bin),
            SampleTag::Diag { dof, .. } => dof.name().to_string(),
        }
    }
}

pub fn format_bin(bin: f64) -> String {
    if bin.fract() == 0.0 {
        format!("{bin:.0}")
    } else {
        format!("{bin}")
    }
}

/// Center-point measurements for one ordered frame pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchMeasurement {
    pub tau: f64,
    pub forward_deviation: f64,
    pub backward_deviation: f64,
    pub mean_deviation: f64,
}

/// Why a candidate pair was not measured.
#[derive(Debug, Clone, PartialEq)]
pub enum SkipReason {
    MissingDepth(u64),
    MissingIntrinsics(u64),
    Geometry(GeometryError),
    OutOfBounds,
}

/// Unprojects each frame's center pixel, reprojects it into the other frame
/// and measures the viewpoint angle at the source's center point.
pub fn measure_bench_pair(src: &Frame, tgt: &Frame) -> Result<BenchMeasurement, SkipReason> {
    let ki = src.intrinsics.ok_or(SkipReason::MissingIntrinsics(src.index))?;
    let kj = tgt.intrinsics.ok_or(SkipReason::MissingIntrinsics(tgt.index))?;
    let di = center_depth(src).map_err(|_| SkipReason::MissingDepth(src.index))?;
    let dj = center_depth(tgt).map_err(|_| SkipReason::MissingDepth(tgt.index))?;
    let (ci, cj) = (ki.center_pixel(), kj.center_pixel());

    let pw_i = unproject(&ci, di, &ki, &src.pose).map_err(SkipReason::Geometry)?;
    let pw_j = unproject(&cj, dj, &kj, &tgt.pose).map_err(SkipReason::Geometry)?;
    let fwd = reproject(&pw_i, &kj, &tgt.pose).map_err(SkipReason::Geometry)?;
    let bwd = reproject(&pw_j, &ki, &src.pose).map_err(SkipReason::Geometry)?;
    if !kj.contains(&fwd) || !ki.contains(&bwd) {
        return Err(SkipReason::OutOfBounds);
    }
    let tau = viewing_angle(&pw_i, &src.pose.origin(), &tgt.pose.origin()).map_err(SkipReason::Geometry)?;
    let forward_deviation = center_deviation(&fwd, &cj);
    let backward_deviation = center_deviation(&bwd, &ci);
    Ok(BenchMeasurement {
        tau,
        forward_deviation,
        backward_deviation,
        mean_deviation: (forward_deviation + backward_deviation) / 2.0,
    })
}

/// Candidate `(i, j)` positions in canonical order whose index gap lies in the window.
fn gap_window(frames: &[Frame], min_gap: u64, max_gap: u64) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..frames.len()).flat_map(move |i| {
        frames[i + 1..]
            .iter()
            .enumerate()
            .take_while(move |(_, f)| f.index - frames[i].index <= max_gap)
            .filter(move |(_, f)| f.index - frames[i].index >= min_gap)
            .map(move |(off, _)| (i, i + 1 + off))
    })
}

fn bench_sample(seq: &SequenceManifest, src: &Frame, tgt: &Frame, cfg: &BenchConfig) -> Option<PairSample> {
    let m = match measure_bench_pair(src, tgt) {
        Ok(m) => m,
        Err(reason) => {
            debug!("skip ({}, {}): {reason:?}", src.index, tgt.index);
            return None;
        }
    };
    let bin = cfg.bin_for(m.tau)?;
    if !(m.mean_deviation < cfg.max_deviation) {
        return None;
    }
    let v = pose_vector(&src.pose, &tgt.pose).ok()?;
    let label_index = bench_label_index(&v, cfg.label_rule, labels::MIN_LABEL_YAW).ok()?;
    Some(PairSample {
        sequence: seq.sequence.clone(),
        src_index: src.index,
        tgt_index: tgt.index,
        pose_vector: v,
        tag: SampleTag::Bench { bin, tau: m.tau, mean_deviation: m.mean_deviation },
        label: BENCH_OPTIONS[label_index as usize].to_string(),
        label_index,
    })
}

/// Every Bench candidate in canonical order, before capping.
pub fn scan_bench(seq: &SequenceManifest, cfg: &BenchConfig) -> Result<Vec<PairSample>, CurationError> {
    cfg.validate()?;
    seq.require_depth_channel().map_err(CurationError::MissingDepthChannel)?;
    Ok(gap_window(&seq.frames, cfg.min_gap, cfg.max_gap)
        .filter_map(|(i, j)| bench_sample(seq, &seq.frames[i], &seq.frames[j], cfg))
        .collect())
}

pub fn curate_bench(seq: &SequenceManifest, cfg: &BenchConfig) -> Result<Vec<PairSample>, CurationError> {
    let candidates = scan_bench(seq, cfg)?;
    Ok(apply_cap(candidates, cfg.per_bin_cap, cfg.seed))
}

fn diag_sample(seq: &SequenceManifest, src: &Frame, tgt: &Frame, th: &DiagThresholds) -> Option<PairSample> {
    let v = match pose_vector(&src.pose, &tgt.pose) {
        Ok(v) => v,
        Err(e) => {
            debug!("skip ({}, {}): {e}", src.index, tgt.index);
            return None;
        }
    };
    let (dof, sign) = th.dominant(&v)?;
    let (label, label_index) = verbalize_diag(dof, sign);
    Some(PairSample {
        sequence: seq.sequence.clone(),
        src_index: src.index,
        tgt_index: tgt.index,
        pose_vector: v,
        tag: SampleTag::Diag { dof, sign },
        label: label.to_string(),
        label_index,
    })
}

/// Every Diag candidate in canonical order, before capping.
pub fn scan_diag(seq: &SequenceManifest, cfg: &DiagConfig) -> Result<Vec<PairSample>, CurationError> {
    cfg.validate()?;
    Ok(gap_window(&seq.frames, cfg.min_gap, cfg.max_gap)
        .filter_map(|(i, j)| diag_sample(seq, &seq.frames[i], &seq.frames[j], &cfg.thresholds))
        .collect())
}

pub fn curate_diag(seq: &SequenceManifest, cfg: &DiagConfig) -> Result<Vec<PairSample>, CurationError> {
    let candidates = scan_diag(seq, cfg)?;
    Ok(apply_cap(candidates, cfg.per_dof_cap, cfg.seed))
}

/// Keeps at most `cap` samples per group with a seeded uniform draw.
/// Survivors stay in their original order.
pub fn apply_cap(samples: Vec<PairSample>, cap: usize, seed: u64) -> Vec<PairSample> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (pos, s) in samples.iter().enumerate() {
        groups.entry(s.group()).or_default().push(pos);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; samples.len()];
    for members in groups.values() {
        if members.len() <= cap {
            members.iter().for_each(|&p| keep[p] = true);
        } else {
            for k in index::sample(&mut rng, members.len(), cap) {
                keep[members[k]] = true;
            }
        }
    }
    samples.into_iter().zip(keep).filter_map(|(s, k)| k.then_some(s)).collect()
}

/// The same pair with source and target exchanged.
///
/// The pose vector is recomputed from the sequence poses and the label is
/// the opposite option; pair-level measurements carry over unchanged.
pub fn swap_sample(s: &PairSample, seq: &SequenceManifest) -> Result<PairSample, CurationError> {
    let src = seq.frame_by_index(s.src_index).ok_or(CurationError::UnknownFrame(s.src_index))?;
    let tgt = seq.frame_by_index(s.tgt_index).ok_or(CurationError::UnknownFrame(s.tgt_index))?;
    let v = pose_vector(&tgt.pose, &src.pose)?;
    let label_index = 1 - s.label_index;
    let (tag, label) = match s.tag {
        SampleTag::Bench { .. } => (s.tag, BENCH_OPTIONS[label_index as usize]),
        SampleTag::Diag { dof, sign } => (SampleTag::Diag { dof, sign: -sign }, dof.options()[label_index as usize]),
    };
    Ok(PairSample {
        sequence: s.sequence.clone(),
        src_index: s.tgt_index,
        tgt_index: s.src_index,
        pose_vector: v,
        tag,
        label: label.to_string(),
        label_index,
    })
}
