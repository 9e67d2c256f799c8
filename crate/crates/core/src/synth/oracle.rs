//! Independent re-derivation of the curation predicates.
//!
//! Works on homogeneous matrices and nalgebra's own Euler extraction rather
//! than the `geometry` helpers the curator uses, so agreement between the two
//! is evidence rather than tautology.

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3, Vector4};
use serde::Serialize;

use crate::curation::{labels::MIN_LABEL_YAW, ClassifyRule};
use crate::curation::{
    BenchConfig, DiagConfig, DiagGate, Dof, PairSample, SampleTag, BENCH_OPTIONS, POSITIVE_YAW_OPTION,
};
use crate::frames::{Frame, SequenceManifest};

/// Agreement tolerance between the curator's stored pose vector and the oracle's.
const POSE_VECTOR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleConfig {
    pub bench: BenchConfig,
    pub diag: DiagConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredicateResult {
    pub name: &'static str,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub sample_id: String,
    pub predicates: Vec<PredicateResult>,
}

impl OracleReport {
    pub fn pass(&self) -> bool {
        self.predicates.iter().all(|p| p.pass)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.predicates.iter().filter(|p| !p.pass).map(|p| p.name).collect()
    }

    fn push(&mut self, name: &'static str, value: f64, pass: bool) {
        self.predicates.push(PredicateResult { name, value, pass });
    }
}

fn homogeneous(f: &Frame) -> Matrix4<f64> {
    let rows = f.pose.to_row_major();
    Matrix4::from_row_slice(&rows)
}

/// `(pitch, yaw, roll, tx, ty, tz)` of `tgt` seen from `src`.
fn relative_components(src: &Frame, tgt: &Frame) -> Option<[f64; 6]> {
    let rel = homogeneous(src).try_inverse()? * homogeneous(tgt);
    let r: Matrix3<f64> = rel.fixed_view::<3, 3>(0, 0).into_owned();
    if r[(2, 0)].abs() > 1.0 - crate::geometry::GIMBAL_MARGIN {
        return None;
    }
    // nalgebra's (roll, pitch, yaw) are rotations about x, y, z: the camera's pitch, yaw, roll.
    let (about_x, about_y, about_z) = Rotation3::from_matrix_unchecked(r).euler_angles();
    Some([about_x, about_y, about_z, rel[(0, 3)], rel[(1, 3)], rel[(2, 3)]])
}

struct CenterGeometry {
    depth_ok: bool,
    forward_in: bool,
    backward_in: bool,
    mean_deviation: f64,
    tau: f64,
}

fn center_geometry(src: &Frame, tgt: &Frame) -> Option<CenterGeometry> {
    let (ki, kj) = (src.intrinsics?, tgt.intrinsics?);
    let (ti, tj) = (homogeneous(src), homogeneous(tgt));
    let (ti_inv, tj_inv) = (ti.try_inverse()?, tj.try_inverse()?);
    let center = |w: u32, h: u32| Vector3::new(f64::from(w / 2), f64::from(h / 2), 1.0);
    let raw_depth = |f: &Frame| {
        let d = f.depth.as_ref()?;
        let raw = d.raw[(d.height / 2) as usize * d.width as usize + (d.width / 2) as usize];
        (raw != 0).then(|| f64::from(raw) / d.depth_scale)
    };
    let (Some(di), Some(dj)) = (raw_depth(src), raw_depth(tgt)) else {
        return Some(CenterGeometry {
            depth_ok: false,
            forward_in: false,
            backward_in: false,
            mean_deviation: f64::NAN,
            tau: f64::NAN,
        });
    };
    let (ci, cj) = (center(ki.width, ki.height), center(kj.width, kj.height));
    let lift = |k: Matrix3<f64>, t: &Matrix4<f64>, c: &Vector3<f64>, d: f64| -> Option<Vector4<f64>> {
        let p = k.try_inverse()? * c * d;
        Some(t * Vector4::new(p.x, p.y, p.z, 1.0))
    };
    let project = |k: Matrix3<f64>, t_inv: &Matrix4<f64>, p: &Vector4<f64>| -> Option<Vector3<f64>> {
        let c = t_inv * p;
        if c.z <= 0.0 {
            return None;
        }
        let h = k * Vector3::new(c.x, c.y, c.z);
        Some(Vector3::new(h.x / h.z, h.y / h.z, 1.0))
    };
    let inside =
        |p: &Vector3<f64>, w: u32, h: u32| p.x >= 0.0 && p.y >= 0.0 && p.x < f64::from(w) && p.y < f64::from(h);

    let pw_i = lift(ki.matrix(), &ti, &ci, di)?;
    let pw_j = lift(kj.matrix(), &tj, &cj, dj)?;
    let fwd = project(kj.matrix(), &tj_inv, &pw_i);
    let bwd = project(ki.matrix(), &ti_inv, &pw_j);
    let forward_in = fwd.is_some_and(|p| inside(&p, kj.width, kj.height));
    let backward_in = bwd.is_some_and(|p| inside(&p, ki.width, ki.height));
    let mean_deviation = match (fwd, bwd) {
        (Some(f), Some(b)) => ((f - cj).norm() + (b - ci).norm()) / 2.0,
        _ => f64::INFINITY,
    };
    let a = ti.fixed_view::<3, 1>(0, 3) - pw_i.xyz();
    let b = tj.fixed_view::<3, 1>(0, 3) - pw_i.xyz();
    let tau = a.cross(&b).norm().atan2(a.dot(&b)).to_degrees();
    Some(CenterGeometry { depth_ok: true, forward_in, backward_in, mean_deviation, tau })
}

fn oracle_bench_label(c: &[f64; 6], rule: ClassifyRule) -> Option<u8> {
    let (value, positive) = match rule {
        ClassifyRule::Yaw => (c[1], POSITIVE_YAW_OPTION),
        ClassifyRule::Lateral => (c[3], 1 - POSITIVE_YAW_OPTION),
    };
    (value.abs() > MIN_LABEL_YAW).then_some(if value > 0.0 { positive } else { 1 - positive })
}

fn in_bin(cfg: &BenchConfig, tau: f64) -> Option<f64> {
    cfg.angle_bins.iter().copied().find(|lo| tau >= *lo && tau <= lo + cfg.bin_width)
}

/// Dominant DoF by direct comparison against both bands.
fn oracle_dominant(c: &[f64; 6], cfg: &DiagConfig) -> (usize, Option<(Dof, i8)>, bool) {
    let th = &cfg.thresholds;
    let dominant = |d: &Dof| {
        let (a, lo, hi) = (c[d.position()].abs(), th.lower(*d), th.upper(*d));
        match th.gate() {
            DiagGate::Band => lo < a && a <= hi,
            DiagGate::AboveUpper => a > hi,
        }
    };
    let above: Vec<Dof> = Dof::ALL.into_iter().filter(dominant).collect();
    let Some(&dof) = above.first().filter(|_| above.len() == 1) else {
        return (above.len(), None, false);
    };
    let quiet = Dof::ALL.into_iter().filter(|d| *d != dof).all(|d| c[d.position()].abs() < th.lower(d));
    let sign = if c[dof.position()] > 0.0 { 1 } else { -1 };
    (1, Some((dof, sign)), quiet)
}

fn gap_ok(src: u64, tgt: u64, min: u64, max: u64) -> (f64, bool) {
    let gap = src.abs_diff(tgt);
    (gap as f64, gap >= min && gap <= max)
}

/// Recomputes every retention predicate for `sample` from the raw sequence data.
pub fn oracle_check_pair(sample: &PairSample, seq: &SequenceManifest, cfg: &OracleConfig) -> OracleReport {
    let mut report = OracleReport { sample_id: sample.id(), predicates: Vec::new() };
    let frame = |i: u64| seq.frames.iter().find(|f| f.index == i);
    let (Some(src), Some(tgt)) = (frame(sample.src_index), frame(sample.tgt_index)) else {
        report.push("frames_exist", 0.0, false);
        return report;
    };
    report.push("sequence", 0.0, sample.sequence == seq.sequence);
    let comps = relative_components(src, tgt);
    let max_diff = comps.map_or(f64::INFINITY, |c| {
        c.iter().zip(sample.pose_vector.components()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    });
    report.push("pose_vector", max_diff, max_diff <= POSE_VECTOR_TOLERANCE);

    match sample.tag {
        SampleTag::Bench { bin, .. } => {
            let c = &cfg.bench;
            let (gap, ok) = gap_ok(sample.src_index, sample.tgt_index, c.min_gap, c.max_gap);
            report.push("gap", gap, ok);
            match center_geometry(src, tgt) {
                Some(g) => {
                    report.push("center_depth", if g.depth_ok { 1.0 } else { 0.0 }, g.depth_ok);
                    report.push("forward_in_bounds", if g.forward_in { 1.0 } else { 0.0 }, g.forward_in);
                    report.push("backward_in_bounds", if g.backward_in { 1.0 } else { 0.0 }, g.backward_in);
                    report.push("mean_deviation", g.mean_deviation, g.mean_deviation < c.max_deviation);
                    report.push("angle_bin", g.tau, in_bin(c, g.tau) == Some(bin));
                }
                None => report.push("center_geometry", 0.0, false),
            }
            let label = comps.and_then(|v| oracle_bench_label(&v, c.label_rule));
            let ok = label == Some(sample.label_index)
                && BENCH_OPTIONS.get(sample.label_index as usize) == Some(&sample.label.as_str());
            report.push("label", f64::from(sample.label_index), ok);
        }
        SampleTag::Diag { dof, sign } => {
            let c = &cfg.diag;
            let (gap, ok) = gap_ok(sample.src_index, sample.tgt_index, c.min_gap, c.max_gap);
            report.push("gap", gap, ok);
            let (above, dominant, quiet) = comps.map_or((0, None, false), |v| oracle_dominant(&v, c));
            report.push("single_dominant", above as f64, above == 1);
            report.push("exclusivity", if quiet { 1.0 } else { 0.0 }, quiet);
            report.push("dof_sign", f64::from(sign), dominant == Some((dof, sign)));
            let index = if sign > 0 { 0u8 } else { 1 };
            let ok = sample.label_index == index && dof.options()[index as usize] == sample.label;
            report.push("label", f64::from(sample.label_index), ok);
        }
    }
    report
}

/// All ordered pairs `(src, tgt, label_index)` with `src < tgt` that pass
/// the Bench predicates, before any cap.
pub fn brute_force_bench(seq: &SequenceManifest, cfg: &BenchConfig) -> Vec<(u64, u64, u8)> {
    let mut out = Vec::new();
    for (i, src) in seq.frames.iter().enumerate() {
        for tgt in &seq.frames[i + 1..] {
            if !gap_ok(src.index, tgt.index, cfg.min_gap, cfg.max_gap).1 {
                continue;
            }
            let Some(g) = center_geometry(src, tgt) else { continue };
            if !(g.depth_ok && g.forward_in && g.backward_in && g.mean_deviation < cfg.max_deviation) {
                continue;
            }
            if in_bin(cfg, g.tau).is_none() {
                continue;
            }
            if let Some(label) = relative_components(src, tgt).and_then(|c| oracle_bench_label(&c, cfg.label_rule)) {
                out.push((src.index, tgt.index, label));
            }
        }
    }
    out
}

/// All ordered pairs `(src, tgt, dof, sign)` with `src < tgt` that pass the
/// Diag predicates, before any cap.
pub fn brute_force_diag(seq: &SequenceManifest, cfg: &DiagConfig) -> Vec<(u64, u64, Dof, i8)> {
    let mut out = Vec::new();
    for (i, src) in seq.frames.iter().enumerate() {
        for tgt in &seq.frames[i + 1..] {
            if !gap_ok(src.index, tgt.index, cfg.min_gap, cfg.max_gap).1 {
                continue;
            }
            if let Some(c) = relative_components(src, tgt) {
                if let (1, Some((dof, sign)), true) = oracle_dominant(&c, cfg) {
                    out.push((src.index, tgt.index, dof, sign));
                }
            }
        }
    }
    out
}
