use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use relpose_core::curation::{
    curate_bench, curate_diag, read_samples_jsonl, write_samples_jsonl, PairSample, SampleTag, BENCH_OPTIONS,
};
use relpose_core::evalkit::{consistency_rate, evaluate_run, EvalError, PredictionSet};
use relpose_core::frames::{ingest, load_manifest, FramesError, Profile, ProfileConfig, Requirement, SequenceManifest};
use relpose_core::geometry::Intrinsics;
use relpose_core::io::atomic_write;
use relpose_core::solver::{
    classify_pair, estimate_relative_pose, read_correspondences_csv, Correspondence, SolverError,
};
use relpose_core::synth::{
    generate_orbit, generate_single_dof, generate_with_depth, oracle_check_pair, project_correspondences,
    write_sequence, OracleConfig, SceneConfig, SynthError, SyntheticScene, TrajectorySpec,
};
use serde::Serialize;

use crate::settings::Settings;
use crate::{Cli, CliError, Command, TrajectoryKind};

fn frames_err(e: FramesError) -> CliError {
    if e.is_io() {
        CliError::Io(format!("frames: {e}"))
    } else {
        CliError::Validation(format!("frames: {e}"))
    }
}

fn synth_err(e: SynthError) -> CliError {
    match e {
        SynthError::Io { .. } => CliError::Io(format!("synth: {e}")),
        SynthError::Frames(f) => frames_err(f),
        other => CliError::Validation(format!("synth: {other}")),
    }
}

fn eval_err(e: EvalError) -> CliError {
    CliError::Validation(format!("evalkit: {e}"))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes atomically to `out`, or to standard output.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            atomic_write(path, text.as_bytes()).map_err(|e| CliError::io(path, e))
        }
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn load(path: &Path, req: Requirement, settings: &Settings) -> Result<SequenceManifest, CliError> {
    let seq = load_manifest(path, req).map_err(frames_err)?;
    if let Some(p) = &settings.profile {
        if *p != seq.profile {
            return Err(CliError::Validation(format!(
                "manifest profile {:?} does not match --profile {p:?}",
                seq.profile
            )));
        }
    }
    Ok(seq)
}

fn read_samples(path: &Path) -> Result<Vec<PairSample>, CliError> {
    read_samples_jsonl(&read_text(path)?)
        .map_err(|e| CliError::Validation(format!("curation: {}: {e}", path.display())))
}

fn read_predictions(path: &Path) -> Result<PredictionSet, CliError> {
    PredictionSet::from_csv(&read_text(path)?)
        .map_err(|e| CliError::Validation(format!("evalkit: {}: {e}", path.display())))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let settings = Settings::resolve(&cli.tuning)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Ingest { input, sequence, fx, fy, cx, cy, depth_scale } => {
            let name =
                settings.profile.as_deref().ok_or_else(|| CliError::Validation("ingest needs --profile".into()))?;
            let profile = Profile::from_name(name).map_err(frames_err)?;
            let sequence = match sequence {
                Some(s) => s.clone(),
                None => input
                    .canonicalize()
                    .map_err(|e| CliError::io(input, e))?
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "sequence".into()),
            };
            let overrides =
                ProfileConfig { fx: *fx, fy: *fy, cx: *cx, cy: *cy, depth_scale: *depth_scale, ..Default::default() };
            let manifest = ingest(profile, input, &sequence, overrides).map_err(frames_err)?;
            info!("ingested {} frames", manifest.frames.len());
            emit(out, &manifest.to_json())
        }
        Command::Synth { trajectory, frames, step, turn_at, radius, dof, increment, points, name, depth } => {
            let dir = out.ok_or_else(|| CliError::Validation("synth needs --out <directory>".into()))?;
            let spec = match trajectory {
                TrajectoryKind::Orbit => TrajectorySpec::Orbit {
                    center: [0.0; 3],
                    radius: *radius,
                    height: 0.0,
                    start_deg: 0.0,
                    step_deg: *step,
                    frames: *frames,
                    turn_at: *turn_at,
                },
                TrajectoryKind::SingleDof => {
                    let dof = relpose_core::curation::Dof::parse(dof)
                        .ok_or_else(|| CliError::Validation(format!("unknown DoF {dof:?}")))?;
                    TrajectorySpec::single_dof(dof, *increment, *frames)
                }
                TrajectoryKind::Static => {
                    TrajectorySpec::Static { position: [0.0, -*radius, 0.0], look_at: [0.0; 3], frames: *frames }
                }
            };
            let poses = spec.poses().map_err(synth_err)?;
            let scene_cfg = SceneConfig { num_points: *points, ..Default::default() };
            let scene = SyntheticScene::generate(&scene_cfg, settings.seed, &poses).map_err(synth_err)?;
            let seq = match trajectory {
                TrajectoryKind::Orbit => generate_orbit(name, &spec, &scene),
                _ if *depth => generate_with_depth(name, &spec, &scene),
                TrajectoryKind::SingleDof => generate_single_dof(name, &spec),
                TrajectoryKind::Static => generate_with_depth(name, &spec, &scene),
            }
            .map_err(synth_err)?;
            let manifest = write_sequence(&seq, &scene, dir).map_err(synth_err)?;
            println!("{}", manifest.display());
            Ok(())
        }
        Command::CurateBench { manifest } => {
            let seq = load(manifest, Requirement::Bench, &settings)?;
            let samples =
                curate_bench(&seq, &settings.bench).map_err(|e| CliError::Validation(format!("curation: {e}")))?;
            info!("kept {} Bench samples", samples.len());
            emit(out, &write_samples_jsonl(&samples))
        }
        Command::CurateDiag { manifest } => {
            let seq = load(manifest, Requirement::Diag, &settings)?;
            let samples =
                curate_diag(&seq, &settings.diag).map_err(|e| CliError::Validation(format!("curation: {e}")))?;
            info!("kept {} Diag samples", samples.len());
            emit(out, &write_samples_jsonl(&samples))
        }
        Command::Solve { matches, intrinsics, intrinsics_tgt, samples, manifest, scene, matches_dir, swap } => {
            if let Some(path) = matches {
                let k_src = parse_intrinsics(
                    intrinsics.as_deref().ok_or_else(|| CliError::Validation("--matches needs --intrinsics".into()))?,
                )?;
                let k_tgt = intrinsics_tgt.as_deref().map(parse_intrinsics).transpose()?.unwrap_or(k_src);
                let mut pts = read_correspondences_csv(&read_text(path)?)
                    .map_err(|e| CliError::Validation(format!("solver: {}: {e}", path.display())))?;
                let (k_a, k_b) = if *swap {
                    pts = pts.iter().map(Correspondence::swapped).collect();
                    (k_tgt, k_src)
                } else {
                    (k_src, k_tgt)
                };
                let solved = solve_one(&pts, &k_a, &k_b, &settings, settings.seed)
                    .map_err(|e| CliError::Validation(format!("solver: {e}")))?;
                let mut text = serde_json::to_string_pretty(&solved).expect("solution serializes");
                text.push('\n');
                return emit(out, &text);
            }
            let (Some(samples), Some(manifest)) = (samples, manifest) else {
                return Err(CliError::Validation("solve needs either --matches or --samples with --manifest".into()));
            };
            let seq = load(manifest, Requirement::Diag, &settings)?;
            let gold = read_samples(samples)?;
            let source = match (scene, matches_dir) {
                (Some(p), None) => MatchSource::Scene(SyntheticScene::from_json(&read_text(p)?).map_err(synth_err)?),
                (None, Some(d)) => MatchSource::Dir(d.clone()),
                _ => {
                    return Err(CliError::Validation(
                        "batch solve needs exactly one of --scene or --matches-dir".into(),
                    ))
                }
            };
            let preds = solve_batch(&gold, &seq, &source, *swap, &settings)?;
            emit(out, &preds.to_csv())
        }
        Command::Eval { gold, predictions, swapped } => {
            let gold = read_samples(gold)?;
            let preds = read_predictions(predictions)?;
            let swapped = swapped.as_deref().map(read_predictions).transpose()?;
            let report = evaluate_run(&gold, &preds, swapped.as_ref()).map_err(eval_err)?;
            emit(out, &report.to_json())?;
            if out.is_some() {
                print!("{}", report.to_table());
            }
            Ok(())
        }
        Command::Consistency { original, swapped } => {
            let a = read_predictions(original)?;
            let b = read_predictions(swapped)?;
            let rate = consistency_rate(&a, &b).map_err(eval_err)?;
            #[derive(Serialize)]
            struct Consistency {
                samples: usize,
                consistency: f64,
            }
            let mut text = serde_json::to_string_pretty(&Consistency { samples: a.len(), consistency: rate })
                .expect("consistency serializes");
            text.push('\n');
            emit(out, &text)?;
            if out.is_some() {
                println!("consistency: {rate:.1}%");
            }
            Ok(())
        }
        Command::Check { samples, manifest } => {
            let samples = read_samples(samples)?;
            let needs_depth = samples.iter().any(|s| matches!(s.tag, SampleTag::Bench { .. }));
            let req = if needs_depth { Requirement::Bench } else { Requirement::Diag };
            let seq = load(manifest, req, &settings)?;
            let cfg = OracleConfig { bench: settings.bench.clone(), diag: settings.diag.clone() };
            let mut text = String::new();
            let mut failed = 0;
            for s in &samples {
                let report = oracle_check_pair(s, &seq, &cfg);
                if !report.pass() {
                    failed += 1;
                    warn!("{} fails: {}", report.sample_id, report.failed().join(", "));
                }
                text.push_str(&serde_json::to_string(&report).expect("report serializes"));
                text.push('\n');
            }
            if out.is_some() {
                emit(out, &text)?;
                println!("checked {} samples, {failed} failed", samples.len());
            } else {
                emit(None, &text)?;
            }
            if failed > 0 {
                return Err(CliError::Validation(format!("check: {failed} of {} samples failed", samples.len())));
            }
            Ok(())
        }
    }
}

fn parse_intrinsics(s: &str) -> Result<Intrinsics, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Validation(format!("intrinsics must be fx,fy,cx,cy,width,height, got {s:?}"));
    if parts.len() != 6 {
        return Err(bad());
    }
    let f = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
    let u = |i: usize| parts[i].parse::<u32>().map_err(|_| bad());
    Intrinsics::new(f(0)?, f(1)?, f(2)?, f(3)?, u(4)?, u(5)?)
        .map_err(|e| CliError::Validation(format!("geometry: {e}")))
}

#[derive(Debug, Serialize)]
struct Solution {
    pitch_deg: f64,
    yaw_deg: f64,
    roll_deg: f64,
    tx: f64,
    ty: f64,
    tz: f64,
    label_index: u8,
    label: &'static str,
    inliers: usize,
    correspondences: usize,
}

fn solve_one(
    pts: &[Correspondence],
    k_a: &Intrinsics,
    k_b: &Intrinsics,
    settings: &Settings,
    seed: u64,
) -> Result<Solution, SolverError> {
    let cfg = relpose_core::solver::RansacConfig { seed, ..settings.ransac };
    let est = estimate_relative_pose(pts, k_a, k_b, &cfg)?;
    let v = est.pose_vector()?;
    let label_index = classify_pair(&v, settings.rule)?;
    Ok(Solution {
        pitch_deg: v.pitch.to_degrees(),
        yaw_deg: v.yaw.to_degrees(),
        roll_deg: v.roll.to_degrees(),
        tx: v.tx,
        ty: v.ty,
        tz: v.tz,
        label_index,
        label: BENCH_OPTIONS[label_index as usize],
        inliers: est.inlier_count(),
        correspondences: pts.len(),
    })
}

impl Solution {
    fn components(&self) -> [f64; 6] {
        [self.pitch_deg, self.yaw_deg, self.roll_deg, self.tx, self.ty, self.tz]
    }
}

enum MatchSource {
    Scene(SyntheticScene),
    Dir(PathBuf),
}

fn solve_batch(
    gold: &[PairSample],
    seq: &SequenceManifest,
    source: &MatchSource,
    swap: bool,
    settings: &Settings,
) -> Result<PredictionSet, CliError> {
    let mut preds = PredictionSet::new();
    for (pos, s) in gold.iter().enumerate() {
        if s.sequence != seq.sequence {
            return Err(CliError::Validation(format!("sample {} is not from sequence {:?}", s.id(), seq.sequence)));
        }
        let frame = |i: u64| {
            seq.frame_by_index(i)
                .ok_or_else(|| CliError::Validation(format!("sample {}: frame {i} not in manifest", s.id())))
        };
        let (src, tgt) = (frame(s.src_index)?, frame(s.tgt_index)?);
        let seed = settings.seed.wrapping_add(pos as u64);
        let pts = match source {
            MatchSource::Scene(scene) => {
                match project_correspondences(scene, src, tgt, settings.noise_sigma, settings.outlier_fraction, seed) {
                    Ok(m) => m.points,
                    Err(e) => {
                        warn!("{}: {e}", s.id());
                        preds.insert(s.id(), None);
                        continue;
                    }
                }
            }
            MatchSource::Dir(dir) => {
                let path = dir.join(&s.sequence).join(format!("{}-{}.csv", s.src_index, s.tgt_index));
                read_correspondences_csv(&read_text(&path)?)
                    .map_err(|e| CliError::Validation(format!("solver: {}: {e}", path.display())))?
            }
        };
        let k = |f: &relpose_core::frames::Frame| {
            f.intrinsics.ok_or_else(|| CliError::Validation(format!("frame {} has no intrinsics", f.index)))
        };
        let (k_src, k_tgt) = (k(src)?, k(tgt)?);
        let result = if swap {
            let swapped: Vec<Correspondence> = pts.iter().map(Correspondence::swapped).collect();
            solve_one(&swapped, &k_tgt, &k_src, settings, seed)
        } else {
            solve_one(&pts, &k_src, &k_tgt, settings, seed)
        };
        match result {
            Ok(sol) => {
                let label = match s.tag {
                    SampleTag::Bench { .. } => Some(sol.label_index),
                    // Diag questions ask for the sign of one component.
                    SampleTag::Diag { dof, .. } => {
                        let c = sol.components()[dof.position()];
                        (c.abs() > relpose_core::solver::MIN_CLASSIFY_MAGNITUDE).then_some(if c > 0.0 { 0 } else { 1 })
                    }
                };
                preds.insert(s.id(), label);
            }
            Err(e) => {
                warn!("{}: {e}", s.id());
                preds.insert(s.id(), None);
            }
        }
    }
    Ok(preds)
}
