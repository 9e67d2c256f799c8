//! Flag and config-file resolution. Flags win over the config file, which
//! wins over library defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use relpose_core::curation::{BenchConfig, ClassifyRule, DiagConfig, DiagGate, DiagThresholds, Dof};
use relpose_core::solver::RansacConfig;
use serde::Deserialize;

use crate::CliError;

/// Tuning flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Tuning {
    /// Seed for every random draw (caps, RANSAC, noise, scenes)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dataset profile: synthetic, 7scenes, scannet, scannetpp
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Lower edges of the viewpoint-angle bins, degrees
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    pub bins: Option<Vec<f64>>,
    /// Width of each angle bin, degrees
    #[arg(long, global = true)]
    pub bin_width: Option<f64>,
    /// Largest accepted mean center deviation, pixels
    #[arg(long, global = true)]
    pub max_deviation: Option<f64>,
    /// Smallest frame-index gap between paired frames
    #[arg(long, global = true)]
    pub min_gap: Option<u64>,
    /// Largest frame-index gap between paired frames
    #[arg(long, global = true)]
    pub max_gap: Option<u64>,
    /// Samples kept per angle bin or DoF
    #[arg(long, global = true)]
    pub cap: Option<usize>,
    /// Which pose component decides the Bench label: yaw or lateral
    #[arg(long, global = true)]
    pub classify_rule: Option<String>,
    /// Diag acceptance of the dominant DoF: band (lower < |v| <= upper) or above-upper
    #[arg(long, global = true)]
    pub diag_gate: Option<String>,
    /// Pixel noise standard deviation for synthetic correspondences
    #[arg(long, global = true)]
    pub noise_sigma: Option<f64>,
    /// Fraction of synthetic correspondences replaced by outliers
    #[arg(long, global = true)]
    pub outlier_fraction: Option<f64>,
    /// RANSAC inlier threshold, normalized image units
    #[arg(long, global = true)]
    pub ransac_threshold: Option<f64>,
    /// Upper bound on RANSAC hypotheses
    #[arg(long, global = true)]
    pub ransac_iterations: Option<usize>,
    /// JSON file with the same keys as the flags (snake_case)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    profile: Option<String>,
    bins: Option<Vec<f64>>,
    bin_width: Option<f64>,
    max_deviation: Option<f64>,
    min_gap: Option<u64>,
    max_gap: Option<u64>,
    cap: Option<usize>,
    classify_rule: Option<String>,
    diag_gate: Option<String>,
    noise_sigma: Option<f64>,
    outlier_fraction: Option<f64>,
    ransac_threshold: Option<f64>,
    ransac_iterations: Option<usize>,
    ransac_confidence: Option<f64>,
    /// DoF name to `[lower, upper]` in degrees or metres.
    thresholds: Option<BTreeMap<String, [f64; 2]>>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub profile: Option<String>,
    pub bench: BenchConfig,
    pub diag: DiagConfig,
    pub ransac: RansacConfig,
    pub rule: ClassifyRule,
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

impl Settings {
    pub fn resolve(t: &Tuning) -> Result<Self, CliError> {
        let file = match &t.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let seed = t.seed.or(file.seed).unwrap_or(0);
        let rule_name = t.classify_rule.clone().or(file.classify_rule);
        let rule = match rule_name.as_deref() {
            None => ClassifyRule::Yaw,
            Some(s) => ClassifyRule::parse(s).ok_or_else(|| {
                CliError::Validation(format!("unknown classify rule {s:?} (expected yaw or lateral)"))
            })?,
        };

        let d = BenchConfig::default();
        let cap_default = d.per_bin_cap;
        let bench = BenchConfig {
            angle_bins: t.bins.clone().or(file.bins).unwrap_or(d.angle_bins),
            bin_width: t.bin_width.or(file.bin_width).unwrap_or(d.bin_width),
            max_deviation: t.max_deviation.or(file.max_deviation).unwrap_or(d.max_deviation),
            min_gap: t.min_gap.or(file.min_gap).unwrap_or(d.min_gap),
            max_gap: t.max_gap.or(file.max_gap).unwrap_or(d.max_gap),
            per_bin_cap: t.cap.or(file.cap).unwrap_or(cap_default),
            seed,
            label_rule: rule,
        };
        bench.validate().map_err(|e| CliError::Validation(format!("curation: {e}")))?;

        let thresholds = match &file.thresholds {
            None => DiagThresholds::default(),
            Some(map) => {
                let mut bands = DiagThresholds::default().to_config_units();
                for (name, [lo, hi]) in map {
                    let dof = Dof::parse(name)
                        .ok_or_else(|| CliError::Validation(format!("config: unknown DoF {name:?} in thresholds")))?;
                    bands[dof.position()] = (*lo, *hi);
                }
                DiagThresholds::from_config_units(bands).map_err(|e| CliError::Validation(format!("curation: {e}")))?
            }
        };
        let gate = match t.diag_gate.clone().or(file.diag_gate).as_deref() {
            None => DiagGate::default(),
            Some(s) => DiagGate::parse(s).ok_or_else(|| {
                CliError::Validation(format!("unknown diag gate {s:?} (expected band or above-upper)"))
            })?,
        };
        let diag = DiagConfig {
            thresholds: thresholds.with_gate(gate),
            min_gap: bench.min_gap,
            max_gap: bench.max_gap,
            per_dof_cap: bench.per_bin_cap,
            seed,
        };
        diag.validate().map_err(|e| CliError::Validation(format!("curation: {e}")))?;

        let r = RansacConfig::default();
        let ransac = RansacConfig {
            max_iterations: t.ransac_iterations.or(file.ransac_iterations).unwrap_or(r.max_iterations),
            threshold: t.ransac_threshold.or(file.ransac_threshold).unwrap_or(r.threshold),
            confidence: file.ransac_confidence.unwrap_or(r.confidence),
            seed,
        };
        ransac.validate().map_err(|e| CliError::Validation(format!("solver: {e}")))?;

        let noise_sigma = t.noise_sigma.or(file.noise_sigma).unwrap_or(0.0);
        let outlier_fraction = t.outlier_fraction.or(file.outlier_fraction).unwrap_or(0.0);
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(CliError::Validation(format!("noise sigma must be non-negative, got {noise_sigma}")));
        }
        if !(0.0..=1.0).contains(&outlier_fraction) {
            return Err(CliError::Validation(format!("outlier fraction must lie in [0, 1], got {outlier_fraction}")));
        }
        Ok(Settings {
            seed,
            profile: t.profile.clone().or(file.profile),
            bench,
            diag,
            ransac,
            rule,
            noise_sigma,
            outlier_fraction,
        })
    }
}
