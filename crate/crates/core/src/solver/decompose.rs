use nalgebra::{Matrix3, Vector2, Vector3};

use super::{normalize_all, Correspondence, EssentialMatrix, SolverError};
use crate::geometry::{Intrinsics, RotationMatrix};

/// Depths of the midpoint triangulation of one correspondence in the source
/// and target cameras, for the motion `x_tgt ~ R x_src + t`. `None` when the
/// two rays are parallel.
pub fn triangulate_depths(
    r: &RotationMatrix,
    t: &Vector3<f64>,
    x_src: &Vector2<f64>,
    x_tgt: &Vector2<f64>,
) -> Option<(f64, f64)> {
    let rt = r.transpose();
    let d1 = x_src.push(1.0);
    let d2 = rt * x_tgt.push(1.0);
    let c2 = -(rt * *t);
    let (a, b, c) = (d1.dot(&d1), d1.dot(&d2), d2.dot(&d2));
    let (d, e) = (d1.dot(&c2), d2.dot(&c2));
    let det = a * c - b * b;
    if !(det > 1e-12 * a * c) {
        return None;
    }
    // Ray parameters equal camera-frame depths because both rays have unit z.
    let depth_src = (d * c - b * e) / det;
    let depth_tgt = (b * d - a * e) / det;
    (depth_src.is_finite() && depth_tgt.is_finite()).then_some((depth_src, depth_tgt))
}

/// Number of normalized correspondences triangulating in front of both cameras.
pub fn count_in_front(r: &RotationMatrix, t: &Vector3<f64>, pts: &[(Vector2<f64>, Vector2<f64>)]) -> usize {
    pts.iter().filter(|(a, b)| matches!(triangulate_depths(r, t, a, b), Some((z1, z2)) if z1 > 0.0 && z2 > 0.0)).count()
}

/// The four `(R, t)` factorizations of an essential matrix.
pub(crate) fn candidates(e: &EssentialMatrix) -> [(RotationMatrix, Vector3<f64>); 4] {
    let svd = e.matrix().svd(true, true);
    let (mut u, mut v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    // Order columns by descending singular value so the null direction is last.
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    u = Matrix3::from_columns(&[u.column(idx[0]), u.column(idx[1]), u.column(idx[2])]);
    v_t = Matrix3::from_rows(&[v_t.row(idx[0]), v_t.row(idx[1]), v_t.row(idx[2])]);
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = RotationMatrix::from_matrix_unchecked(u * w * v_t);
    let r2 = RotationMatrix::from_matrix_unchecked(u * w.transpose() * v_t);
    let t: Vector3<f64> = u.column(2).normalize();
    [(r1, t), (r1, -t), (r2, t), (r2, -t)]
}

/// Picks the factorization that places the most inliers in front of both
/// cameras. Requires a strict majority of the inliers.
pub fn decompose_essential(
    e: &EssentialMatrix,
    pts: &[Correspondence],
    k_src: &Intrinsics,
    k_tgt: &Intrinsics,
) -> Result<(RotationMatrix, Vector3<f64>), SolverError> {
    let norm = normalize_all(pts, k_src, k_tgt);
    let mut best: Option<(usize, (RotationMatrix, Vector3<f64>))> = None;
    for cand in candidates(e) {
        let n = count_in_front(&cand.0, &cand.1, &norm);
        if best.as_ref().is_none_or(|b| n > b.0) {
            best = Some((n, cand));
        }
    }
    let (count, winner) = best.expect("four candidates");
    if 2 * count <= norm.len() {
        return Err(SolverError::CheiralityAmbiguous { best: count, total: norm.len() });
    }
    Ok(winner)
}
