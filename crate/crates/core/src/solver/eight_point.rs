use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

use super::{normalize_all, Correspondence, EssentialMatrix, SolverError};
use crate::geometry::Intrinsics;

/// Second-smallest singular value of the design matrix, relative to the
/// largest, below which the null space is considered more than one-dimensional.
const RANK_TOLERANCE: f64 = 1e-8;

/// Normalized eight-point estimate of the essential matrix.
///
/// Pixels are mapped through the intrinsics, conditioned (centroid at the
/// origin, RMS distance √2), solved in the least-squares sense and projected
/// onto the essential manifold by forcing singular values `(σ, σ, 0)`.
pub fn eight_point_essential(
    pts: &[Correspondence],
    k_src: &Intrinsics,
    k_tgt: &Intrinsics,
) -> Result<EssentialMatrix, SolverError> {
    if pts.len() < 8 {
        return Err(SolverError::InsufficientPoints(pts.len()));
    }
    fit_normalized(&normalize_all(pts, k_src, k_tgt))
}

/// Similarity transform that centers `pts` and scales their RMS radius to √2.
fn conditioning(pts: impl Iterator<Item = Vector2<f64>> + Clone) -> Option<Matrix3<f64>> {
    let n = pts.clone().count() as f64;
    let centroid = pts.clone().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let rms = (pts.map(|p| (p - centroid).norm_squared()).sum::<f64>() / n).sqrt();
    if !(rms > 0.0 && rms.is_finite()) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / rms;
    Some(Matrix3::new(s, 0.0, -s * centroid.x, 0.0, s, -s * centroid.y, 0.0, 0.0, 1.0))
}

pub(crate) fn fit_normalized(pts: &[(Vector2<f64>, Vector2<f64>)]) -> Result<EssentialMatrix, SolverError> {
    if pts.len() < 8 {
        return Err(SolverError::InsufficientPoints(pts.len()));
    }
    let t_src = conditioning(pts.iter().map(|p| p.0)).ok_or(SolverError::DegenerateConfiguration)?;
    let t_tgt = conditioning(pts.iter().map(|p| p.1)).ok_or(SolverError::DegenerateConfiguration)?;

    // Pad to nine rows so the SVD always exposes a full 9×9 right basis.
    let rows = pts.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (r, (x1, x2)) in pts.iter().enumerate() {
        let p = t_src * Vector3::new(x1.x, x1.y, 1.0);
        let q = t_tgt * Vector3::new(x2.x, x2.y, 1.0);
        let row = [q.x * p.x, q.x * p.y, q.x, q.y * p.x, q.y * p.y, q.y, p.x, p.y, 1.0];
        for (c, v) in row.into_iter().enumerate() {
            a[(r, c)] = v;
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(SolverError::DegenerateConfiguration)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = |k: usize| svd.singular_values[order[k]];
    let largest = sigma(0);
    if !(largest > 0.0) || sigma(7) < RANK_TOLERANCE * largest {
        return Err(SolverError::DegenerateConfiguration);
    }
    let null = v_t.row(order[8]);
    let e_cond = Matrix3::from_row_slice(null.transpose().as_slice());

    let e = t_tgt.transpose() * e_cond * t_src;
    Ok(project_to_essential(&e))
}

/// Closest matrix with singular values `(1, 1, 0)` up to overall scale.
pub(crate) fn project_to_essential(e: &Matrix3<f64>) -> EssentialMatrix {
    let svd = e.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut e = Matrix3::zeros();
    for &k in &idx[..2] {
        e += u.column(k) * v_t.row(k);
    }
    EssentialMatrix(e)
}
