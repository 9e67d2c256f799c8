//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Built with `harness = false` so the lines
//! show up in plain `cargo test` output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relpose_core::curation::{
    curate_bench, curate_diag, BenchConfig, ClassifyRule, DiagConfig, Dof, PairSample, SampleTag, BENCH_OPTIONS,
};
use relpose_core::evalkit::{consistency_rate, evaluate_run, macro_f1, random_predictions, PredictionSet};
use relpose_core::frames::{Frame, SequenceManifest};
use relpose_core::geometry::{
    euler_from_rotation, relative_pose, reproject, rotation_from_euler, unproject, Intrinsics, PixelPoint, Pose,
    PoseVector,
};
use relpose_core::solver::{classify_pair, estimate_relative_pose, Correspondence, RansacConfig};
use relpose_core::synth::{
    brute_force_bench, brute_force_diag, generate_orbit, generate_single_dof, oracle_check_pair,
    project_correspondences, OracleConfig, SceneConfig, SyntheticScene, TrajectorySpec,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("geometry round-trips", Some(Duration::from_secs(5)), geometry_round_trips),
        ("curation soundness and completeness", Some(Duration::from_secs(60)), curation_matches_brute_force),
        ("diag threshold fidelity", None, diag_thresholds),
        ("solver accuracy on synthetic bench", Some(Duration::from_secs(120)), solver_accuracy),
        ("swap consistency", None, swap_consistency),
        ("metric fidelity", None, metric_fidelity),
        ("subcommand determinism", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut o = run();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > b {
                o.pass = false;
                o.detail = format!("{}; over the {:.0} s budget", o.detail, b.as_secs_f64());
            }
        }
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {name} ({:.2} s): {}", i + 1, took.as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", 7 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

const CASES: usize = 10_000;

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let r = rotation_from_euler(rng.random_range(-3.1..3.1), rng.random_range(-1.5..1.5), rng.random_range(-3.1..3.1));
    Pose::new(r, Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
}

fn geometry_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut euler_err, mut build_err) = (0.0f64, 0.0f64);
    for _ in 0..CASES {
        let (p, y, r) = (rng.random_range(-3.1..3.1), rng.random_range(-1.5..1.5), rng.random_range(-3.1..3.1));
        let m = rotation_from_euler(p, y, r);
        // nalgebra's (roll, pitch, yaw) are rotations about x, y, z composed as Rz·Ry·Rx.
        let reference = Rotation3::from_euler_angles(p, y, r);
        build_err = build_err.max((m.matrix() - reference.matrix()).abs().max());
        match euler_from_rotation(&m) {
            Ok((p2, y2, r2)) => euler_err = euler_err.max((p - p2).abs().max((y - y2).abs()).max((r - r2).abs())),
            Err(_) => euler_err = f64::INFINITY,
        }
    }

    let k = Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480).unwrap();
    let mut px_err = 0.0f64;
    for _ in 0..CASES {
        let pose = random_pose(&mut rng);
        let px = PixelPoint::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let depth = rng.random_range(0.3..20.0);
        let back = unproject(&px, depth, &k, &pose).and_then(|w| reproject(&w, &k, &pose));
        px_err = px_err.max(back.map_or(f64::INFINITY, |b| (b.u - px.u).hypot(b.v - px.v)));
    }

    let mut comp_err = 0.0f64;
    for _ in 0..CASES {
        let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
        let rel = relative_pose(&a, &b);
        let expected = a.to_homogeneous().try_inverse().unwrap() * b.to_homogeneous();
        comp_err = comp_err.max((rel.to_homogeneous() - expected).abs().max());
        comp_err = comp_err.max(((a * rel).to_homogeneous() - b.to_homogeneous()).abs().max());
    }

    let pass = euler_err <= 1e-9 && build_err <= 1e-9 && px_err <= 1e-6 && comp_err <= 1e-9;
    outcome(
        pass,
        format!(
            "{CASES} cases each; euler {euler_err:.1e} rad (matrix vs reference {build_err:.1e}), projection {px_err:.1e} px, composition {comp_err:.1e}"
        ),
    )
}

fn orbit_sequence(spec: &TrajectorySpec, seed: u64) -> (SequenceManifest, SyntheticScene) {
    let scene = SyntheticScene::generate(&SceneConfig::default(), seed, &spec.poses().unwrap()).unwrap();
    (generate_orbit("orbit", spec, &scene).unwrap(), scene)
}

fn sorted<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v
}

fn curation_matches_brute_force() -> Outcome {
    let oracle = OracleConfig::default();
    let mut notes = Vec::new();
    let mut pass = true;

    for (name, spec) in
        [("orbit", TrajectorySpec::orbit(1.1, 200)), ("there-and-back", TrajectorySpec::orbit_there_and_back(1.1, 200))]
    {
        let (seq, _) = orbit_sequence(&spec, 5);
        let uncapped = BenchConfig { per_bin_cap: usize::MAX, ..Default::default() };
        let got = sorted(
            curate_bench(&seq, &uncapped).unwrap().iter().map(|s| (s.src_index, s.tgt_index, s.label_index)).collect(),
        );
        let expected = sorted(brute_force_bench(&seq, &uncapped));
        let capped = curate_bench(&seq, &oracle.bench).unwrap();
        let bad = capped.iter().filter(|s| !oracle_check_pair(s, &seq, &oracle).pass()).count();
        pass &= got == expected && !got.is_empty() && bad == 0;
        notes.push(format!("{name} {}/{} pairs, {bad} of {} rechecks failed", got.len(), expected.len(), capped.len()));
    }

    // Increments chosen so that gaps 10..=k land inside each band, away from its edges.
    let increments =
        [(Dof::Pitch, 0.7), (Dof::Yaw, -0.7), (Dof::Roll, 0.45), (Dof::Tx, 0.023), (Dof::Ty, -0.013), (Dof::Tz, 0.023)];
    let mut diag_total = (0, 0);
    for (dof, inc) in increments {
        let seq = generate_single_dof(dof.name(), &TrajectorySpec::single_dof(dof, inc, 200)).unwrap();
        let uncapped = DiagConfig { per_dof_cap: usize::MAX, ..Default::default() };
        let got: Vec<_> = curate_diag(&seq, &uncapped)
            .unwrap()
            .iter()
            .map(|s| match s.tag {
                SampleTag::Diag { dof, sign } => (s.src_index, s.tgt_index, dof, sign),
                SampleTag::Bench { .. } => unreachable!(),
            })
            .collect();
        let expected = brute_force_diag(&seq, &uncapped);
        let capped = curate_diag(&seq, &oracle.diag).unwrap();
        let bad = capped.iter().filter(|s| !oracle_check_pair(s, &seq, &oracle).pass()).count();
        let same = sorted(got.clone()) == sorted(expected.clone());
        pass &= same && !got.is_empty() && bad == 0;
        if !same || bad > 0 || got.is_empty() {
            notes.push(format!("{} {}/{} pairs, {bad} rechecks failed", dof.name(), got.len(), expected.len()));
        }
        diag_total.0 += got.len();
        diag_total.1 += capped.len();
    }
    notes.push(format!("single-dof x6 {} pairs, {} rechecked", diag_total.0, diag_total.1));
    outcome(pass, notes.join("; "))
}

fn two_frames(components: [f64; 6]) -> SequenceManifest {
    let mut seq = generate_single_dof("pair", &TrajectorySpec::single_dof(Dof::Yaw, 1.0, 2)).unwrap();
    seq.frames[1].pose = seq.frames[0].pose * PoseVector::from_components(components).to_pose();
    seq
}

fn diag_thresholds() -> Outcome {
    let cfg = DiagConfig { min_gap: 1, max_gap: 1, ..Default::default() };
    let deg = f64::to_radians;
    let pure = generate_single_dof("yaw10", &TrajectorySpec::single_dof(Dof::Yaw, 10.0, 2)).unwrap();
    let kept = curate_diag(&pure, &cfg).unwrap();
    let keep_ok = kept.len() == 1 && kept[0].tag == (SampleTag::Diag { dof: Dof::Yaw, sign: 1 });
    let small = generate_single_dof("yaw4", &TrajectorySpec::single_dof(Dof::Yaw, 4.0, 2)).unwrap();
    let rejects = [
        ("4 deg yaw", small),
        ("10 deg yaw + 6 deg pitch", two_frames([deg(6.0), deg(10.0), 0.0, 0.0, 0.0, 0.0])),
        ("10 deg yaw + 0.2 tx", two_frames([0.0, deg(10.0), 0.0, 0.2, 0.0, 0.0])),
    ];
    let mut notes = vec![format!("10 deg pure yaw {}", if keep_ok { "kept" } else { "NOT kept" })];
    let mut pass = keep_ok;
    for (name, seq) in rejects {
        let n = curate_diag(&seq, &cfg).unwrap().len();
        pass &= n == 0;
        notes.push(format!("{name} {}", if n == 0 { "rejected" } else { "NOT rejected" }));
    }
    outcome(pass, notes.join(", "))
}

fn frames_of<'a>(seq: &'a SequenceManifest, s: &PairSample) -> (&'a Frame, &'a Frame) {
    (seq.frame_by_index(s.src_index).unwrap(), seq.frame_by_index(s.tgt_index).unwrap())
}

fn ransac(threshold: f64, seed: u64) -> RansacConfig {
    RansacConfig { threshold, seed, ..Default::default() }
}

/// Inlier threshold for pixel noise `sigma`: about three standard deviations
/// of the symmetric epipolar distance, never below the noiseless default.
fn threshold_for(sigma: f64, focal: f64) -> f64 {
    RansacConfig::default().threshold.max(6.0 * sigma / focal)
}

fn predict(
    gold: &[PairSample],
    seq: &SequenceManifest,
    scene: &SyntheticScene,
    sigma: f64,
    outliers: f64,
    swap: bool,
) -> PredictionSet {
    gold.iter()
        .enumerate()
        .map(|(pos, s)| {
            let (src, tgt) = frames_of(seq, s);
            let (k_src, k_tgt) = (src.intrinsics.unwrap(), tgt.intrinsics.unwrap());
            let seed = pos as u64;
            let label = project_correspondences(scene, src, tgt, sigma, outliers, seed).ok().and_then(|m| {
                let cfg = ransac(threshold_for(sigma, k_src.fx), seed);
                let est = if swap {
                    let pts: Vec<Correspondence> = m.points.iter().map(Correspondence::swapped).collect();
                    estimate_relative_pose(&pts, &k_tgt, &k_src, &cfg)
                } else {
                    estimate_relative_pose(&m.points, &k_src, &k_tgt, &cfg)
                };
                est.ok()?.pose_vector().ok().and_then(|v| classify_pair(&v, ClassifyRule::Yaw).ok())
            });
            (s.id(), label)
        })
        .collect()
}

fn bench_gold(per_bin: usize) -> (Vec<PairSample>, SequenceManifest, SyntheticScene) {
    let (seq, scene) = orbit_sequence(&TrajectorySpec::orbit_there_and_back(1.1, 200), 11);
    let cfg = BenchConfig { per_bin_cap: per_bin, seed: 3, ..Default::default() };
    (curate_bench(&seq, &cfg).unwrap(), seq, scene)
}

fn per_bin_counts(gold: &[PairSample]) -> BTreeMap<String, [usize; 2]> {
    let mut counts = BTreeMap::new();
    for s in gold {
        counts.entry(s.group()).or_insert([0; 2])[s.label_index as usize] += 1;
    }
    counts
}

fn solver_accuracy() -> Outcome {
    let (gold, seq, scene) = bench_gold(100);
    let counts = per_bin_counts(&gold);
    let sizes_ok = counts.len() == 4 && counts.values().all(|c| c[0] + c[1] == 100);
    let balance = counts.iter().map(|(b, c)| format!("{b}:{}/{}", c[0], c[1])).collect::<Vec<_>>().join(" ");

    let clean = evaluate_run(&gold, &predict(&gold, &seq, &scene, 0.0, 0.0, false), None).unwrap();
    let clean_ok = clean.groups.iter().all(|g| g.macro_f1 >= 0.99);
    let noisy = evaluate_run(&gold, &predict(&gold, &seq, &scene, 2.0, 0.3, false), None).unwrap();
    let noisy_ok = noisy.average >= 0.90;

    // Rotation error against ground truth, 100 pairs (25 per bin) per noise level.
    let mut trials: Vec<&PairSample> = Vec::new();
    for bin in counts.keys() {
        trials.extend(gold.iter().filter(|s| &s.group() == bin).take(25));
    }
    let mut errors = Vec::new();
    for sigma in [0.0, 1.0, 2.0, 4.0] {
        let mut total = 0.0;
        for (pos, s) in trials.iter().enumerate() {
            let (src, tgt) = frames_of(&seq, s);
            let (k_src, k_tgt) = (src.intrinsics.unwrap(), tgt.intrinsics.unwrap());
            let truth = relative_pose(&src.pose, &tgt.pose).rotation;
            let err = project_correspondences(&scene, src, tgt, sigma, 0.0, pos as u64)
                .ok()
                .and_then(|m| {
                    estimate_relative_pose(
                        &m.points,
                        &k_src,
                        &k_tgt,
                        &ransac(threshold_for(sigma, k_src.fx), pos as u64),
                    )
                    .ok()
                })
                .map_or(std::f64::consts::PI, |e| e.relative_pose().rotation.geodesic_distance(&truth));
            total += err.to_degrees();
        }
        errors.push(total / trials.len() as f64);
    }
    let monotone = trials.len() >= 100 && errors.windows(2).all(|w| w[0] <= w[1]);

    let clean_bins =
        clean.groups.iter().map(|g| format!("{}:{:.3}", g.group, g.macro_f1)).collect::<Vec<_>>().join(" ");
    let err_text = errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" <= ");
    outcome(
        sizes_ok && clean_ok && noisy_ok && monotone,
        format!(
            "gold per bin (option0/option1) {balance}; noiseless F1 {clean_bins}; 2 px + 30% outliers avg {:.3} ({} abstained); mean rotation error deg over {} trials {err_text}",
            noisy.average,
            noisy.abstentions,
            trials.len()
        ),
    )
}

fn swap_consistency() -> Outcome {
    let (gold, seq, scene) = bench_gold(75);
    let original = predict(&gold, &seq, &scene, 0.0, 0.0, false);
    let swapped = predict(&gold, &seq, &scene, 0.0, 0.0, true);
    let rate = consistency_rate(&original, &swapped).unwrap();
    outcome(gold.len() == 300 && rate == 100.0, format!("{} pairs, consistency {rate:.1}%", gold.len()))
}

fn balanced_gold(n: usize) -> Vec<PairSample> {
    (0..n)
        .map(|i| {
            let label_index = (i % 2) as u8;
            PairSample {
                sequence: "metric".into(),
                src_index: i as u64,
                tgt_index: i as u64 + 10,
                pose_vector: PoseVector::default(),
                tag: SampleTag::Bench { bin: 15.0, tau: 17.0, mean_deviation: 0.0 },
                label: BENCH_OPTIONS[label_index as usize].into(),
                label_index,
            }
        })
        .collect()
}

fn metric_fidelity() -> Outcome {
    let gold = balanced_gold(10_000);
    let perfect = PredictionSet::from_gold(&gold);
    let inverted = perfect.complement();
    let constant: PredictionSet = gold.iter().map(|s| (s.id(), Some(0u8))).collect();
    // Constant on a balanced set: one option has P = 1/2, R = 1, F1 = 2/3; the other scores 0.
    let cases = [("perfect", &perfect, 1.0), ("inverted", &inverted, 0.0), ("constant", &constant, 1.0 / 3.0)];
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, preds, expected) in cases {
        let got = macro_f1(preds, &gold).unwrap();
        pass &= (got - expected).abs() <= 1e-12;
        notes.push(format!("{name} {got:.6}"));
    }
    let random = macro_f1(&random_predictions(&gold, 2024), &gold).unwrap();
    pass &= (random - 0.5).abs() <= 0.05;
    notes.push(format!("seeded random over {} samples {random:.4}", gold.len()));
    outcome(pass, notes.join(", "))
}

fn relpose(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_relpose")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn determinism() -> Outcome {
    match run_everything_twice() {
        Ok(names) => outcome(true, format!("byte-identical reruns of {}", names.join(", "))),
        Err(e) => outcome(false, e),
    }
}

fn write_seven_scenes(root: &Path) {
    fs::create_dir_all(root).unwrap();
    for i in 0..4 {
        let stem = root.join(format!("frame-{i:06}"));
        fs::write(stem.with_extension("color.png"), b"").unwrap();
        let depth = relpose_core::frames::DepthMap::new(640, 480, vec![1500 + i as u16; 640 * 480], 1000.0);
        relpose_core::frames::write_depth_png(&stem.with_extension("depth.png"), &depth).unwrap();
        fs::write(stem.with_extension("pose.txt"), format!("1 0 0 {}\n0 1 0 0\n0 0 1 0\n0 0 0 1\n", 0.1 * i as f64))
            .unwrap();
    }
}

fn run_everything_twice() -> Result<Vec<&'static str>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();
    let mut checked = Vec::new();

    // Each step runs twice with the output path suffixed by the run number.
    let twice = |name: &'static str, args: &dyn Fn(&str) -> Vec<String>, out_is_dir: bool| -> Result<(), String> {
        let mut results = Vec::new();
        for run in ["1", "2"] {
            let a = args(run);
            let refs: Vec<&str> = a.iter().map(String::as_str).collect();
            let stdout = relpose(&refs)?;
            let out = PathBuf::from(a[a.iter().position(|x| x == "--out").unwrap() + 1].clone());
            let files =
                if out_is_dir { tree(&out) } else { BTreeMap::from([(PathBuf::new(), fs::read(&out).unwrap())]) };
            let stdout = String::from_utf8_lossy(&stdout).replace(out.to_str().unwrap(), "<out>");
            results.push((files, stdout));
        }
        if results[0] != results[1] {
            return Err(format!("{name} output differs between identical runs"));
        }
        Ok(())
    };
    let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    twice(
        "synth",
        &|r| v(&["synth", "--frames", "60", "--turn-at", "30", "--seed", "4", "--out", &p(&format!("orbit{r}"))]),
        true,
    )?;
    twice(
        "synth single-dof",
        &|r| {
            v(&[
                "synth",
                "--trajectory",
                "single-dof",
                "--dof",
                "tz",
                "--increment",
                "0.03",
                "--frames",
                "40",
                "--depth",
                "--out",
                &p(&format!("dof{r}")),
            ])
        },
        true,
    )?;
    checked.push("synth");
    write_seven_scenes(&d.join("chess-seq-01"));
    twice(
        "ingest",
        &|r| {
            v(&[
                "ingest",
                "--profile",
                "7scenes",
                "--input",
                &p("chess-seq-01"),
                "--out",
                &p(&format!("ingest{r}.json")),
            ])
        },
        false,
    )?;
    checked.push("ingest");

    let manifest = p("orbit1/manifest.json");
    let scene = p("orbit1/scene.json");
    twice(
        "curate-bench",
        &|r| {
            v(&[
                "curate-bench",
                "--manifest",
                &manifest,
                "--cap",
                "15",
                "--seed",
                "9",
                "--out",
                &p(&format!("bench{r}.jsonl")),
            ])
        },
        false,
    )?;
    twice(
        "curate-diag",
        &|r| {
            v(&[
                "curate-diag",
                "--manifest",
                &p("dof1/manifest.json"),
                "--cap",
                "15",
                "--seed",
                "9",
                "--out",
                &p(&format!("diag{r}.jsonl")),
            ])
        },
        false,
    )?;
    checked.extend(["curate-bench", "curate-diag"]);
    let gold = p("bench1.jsonl");
    let noisy = ["--noise-sigma", "2", "--outlier-fraction", "0.3", "--ransac-threshold", "0.025", "--seed", "6"];
    twice(
        "solve",
        &|r| {
            [
                v(&["solve", "--samples", &gold, "--manifest", &manifest, "--scene", &scene]),
                v(&noisy),
                v(&["--out", &p(&format!("preds{r}.csv"))]),
            ]
            .concat()
        },
        false,
    )?;
    twice(
        "solve --swap",
        &|r| {
            [
                v(&["solve", "--samples", &gold, "--manifest", &manifest, "--scene", &scene, "--swap"]),
                v(&noisy),
                v(&["--out", &p(&format!("swapped{r}.csv"))]),
            ]
            .concat()
        },
        false,
    )?;
    checked.push("solve");
    twice(
        "eval",
        &|r| {
            v(&[
                "eval",
                "--gold",
                &gold,
                "--predictions",
                &p("preds1.csv"),
                "--swapped",
                &p("swapped1.csv"),
                "--out",
                &p(&format!("report{r}.json")),
            ])
        },
        false,
    )?;
    checked.push("eval");
    twice(
        "consistency",
        &|r| {
            v(&[
                "consistency",
                "--original",
                &p("preds1.csv"),
                "--swapped",
                &p("swapped1.csv"),
                "--out",
                &p(&format!("cons{r}.json")),
            ])
        },
        false,
    )?;
    checked.push("consistency");
    twice(
        "check",
        &|r| v(&["check", "--samples", &gold, "--manifest", &manifest, "--out", &p(&format!("check{r}.jsonl"))]),
        false,
    )?;
    checked.push("check");
    Ok(checked)
}
