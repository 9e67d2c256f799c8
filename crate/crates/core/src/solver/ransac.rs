use nalgebra::Vector2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eight_point::fit_normalized;
use super::{normalize_all, Correspondence, EssentialMatrix, SolverError};
use crate::geometry::Intrinsics;

const SAMPLE_SIZE: usize = 8;
const MAX_REFITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Inlier threshold on the symmetric epipolar distance, normalized image units.
    pub threshold: f64,
    /// Target probability of having drawn at least one all-inlier sample.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { max_iterations: 2000, threshold: 1e-3, confidence: 0.999, seed: 0 }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations < 1 {
            return Err(SolverError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("threshold must be positive, got {}", self.threshold)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(SolverError::InvalidConfig(format!("confidence must lie in (0, 1), got {}", self.confidence)));
        }
        Ok(())
    }
}

/// `sqrt(r² / |E x|²₁₂ + r² / |Eᵀ x'|²₁₂)` with `r = x'ᵀ E x`: the root sum
/// of squared point-to-epipolar-line distances in both images.
pub fn symmetric_epipolar_distance(e: &EssentialMatrix, x_src: &Vector2<f64>, x_tgt: &Vector2<f64>) -> f64 {
    let (p, q) = (x_src.push(1.0), x_tgt.push(1.0));
    let line_tgt = e.matrix() * p;
    let line_src = e.matrix().transpose() * q;
    let r = q.dot(&line_tgt);
    let n_tgt = line_tgt.x * line_tgt.x + line_tgt.y * line_tgt.y;
    let n_src = line_src.x * line_src.x + line_src.y * line_src.y;
    if n_tgt == 0.0 || n_src == 0.0 {
        return if r == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (r * r / n_tgt + r * r / n_src).sqrt()
}

fn inlier_mask(e: &EssentialMatrix, pts: &[(Vector2<f64>, Vector2<f64>)], threshold: f64) -> (Vec<bool>, usize) {
    let mask: Vec<bool> = pts.iter().map(|(a, b)| symmetric_epipolar_distance(e, a, b) < threshold).collect();
    let count = mask.iter().filter(|m| **m).count();
    (mask, count)
}

/// Iterations needed to see an all-inlier sample with probability `confidence`.
fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let p_good = inlier_ratio.powi(SAMPLE_SIZE as i32);
    if p_good >= 1.0 {
        return 1;
    }
    if p_good <= 0.0 {
        return cap;
    }
    let n = ((1.0 - confidence).ln() / (1.0 - p_good).ln()).ceil();
    if n.is_finite() && n >= 1.0 {
        (n as usize).min(cap)
    } else {
        cap
    }
}

/// Robust essential matrix with its inlier mask.
///
/// Hypotheses come from seeded eight-point samples; the best consensus (ties
/// go to the earliest hypothesis) is re-fitted on all of its inliers.
pub fn ransac_essential(
    pts: &[Correspondence],
    k_src: &Intrinsics,
    k_tgt: &Intrinsics,
    cfg: &RansacConfig,
) -> Result<(EssentialMatrix, Vec<bool>), SolverError> {
    cfg.validate()?;
    if pts.len() < SAMPLE_SIZE {
        return Err(SolverError::InsufficientPoints(pts.len()));
    }
    let norm = normalize_all(pts, k_src, k_tgt);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best: Option<(EssentialMatrix, Vec<bool>, usize)> = None;
    let mut budget = cfg.max_iterations;
    let mut iteration = 0;
    let mut sample = Vec::with_capacity(SAMPLE_SIZE);
    while iteration < budget {
        iteration += 1;
        sample.clear();
        sample.extend(index::sample(&mut rng, norm.len(), SAMPLE_SIZE).into_iter().map(|i| norm[i]));
        let Ok(e) = fit_normalized(&sample) else { continue };
        let (mask, count) = inlier_mask(&e, &norm, cfg.threshold);
        if best.as_ref().is_none_or(|b| count > b.2) {
            budget = required_iterations(count as f64 / norm.len() as f64, cfg.confidence, cfg.max_iterations);
            best = Some((e, mask, count));
        }
    }

    let (mut model, mut mask, mut count) = match best {
        Some(b) if b.2 >= SAMPLE_SIZE => b,
        Some(b) => return Err(SolverError::NoConsensus(b.2)),
        None => return Err(SolverError::NoConsensus(0)),
    };

    // Re-fit on the consensus set while it does not shrink.
    for _ in 0..MAX_REFITS {
        let inliers: Vec<_> = norm.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
        let Ok(refit) = fit_normalized(&inliers) else { break };
        let (refit_mask, refit_count) = inlier_mask(&refit, &norm, cfg.threshold);
        if refit_count < count {
            break;
        }
        let converged = refit_mask == mask;
        model = refit;
        mask = refit_mask;
        count = refit_count;
        if converged {
            break;
        }
    }
    Ok((model, mask))
}
