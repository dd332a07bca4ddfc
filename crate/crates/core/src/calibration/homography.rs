use nalgebra::{DMatrix, Matrix3, Point2};

use crate::conic::Homography;
use crate::error::{Error, Result};

/// Relative singular-value gap below which a point set counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Similarity taking `pts` to zero centroid and RMS distance √2.
fn normalizing_transform(pts: &[Point2<f64>]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x / n, y + p.y / n));
    let rms = (pts.iter().map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2)).sum::<f64>() / n).sqrt();
    if !(rms > 0.0 && rms.is_finite()) {
        return Err(Error::DegenerateConfiguration("coincident points"));
    }
    let s = std::f64::consts::SQRT_2 / rms;
    Ok(Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0))
}

fn apply(t: &Matrix3<f64>, p: &Point2<f64>) -> Point2<f64> {
    Point2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

fn is_collinear(pts: &[Point2<f64>]) -> bool {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x / n, y + p.y / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    tr <= 0.0 || det <= RANK_TOL * tr * tr
}

/// Hartley-normalized DLT homography mapping `points_w` onto `points_i`.
pub fn estimate_homography(points_w: &[Point2<f64>], points_i: &[Point2<f64>]) -> Result<Homography> {
    if points_w.len() != points_i.len() {
        return Err(Error::InvalidParameter(format!(
            "{} target points but {} image points",
            points_w.len(),
            points_i.len()
        )));
    }
    if points_w.len() < 4 {
        return Err(Error::DegenerateConfiguration("need at least 4 correspondences"));
    }
    if is_collinear(points_w) || is_collinear(points_i) {
        return Err(Error::DegenerateConfiguration("collinear correspondences"));
    }
    let tw = normalizing_transform(points_w)?;
    let ti = normalizing_transform(points_i)?;

    let n = points_w.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for (k, (pw, pi)) in points_w.iter().zip(points_i).enumerate() {
        let w = apply(&tw, pw);
        let i = apply(&ti, pi);
        let (x, y, u, v) = (w.x, w.y, i.x, i.y);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * k, c)] = r0[c];
            a[(2 * k + 1, c)] = r1[c];
        }
    }
    let h = smallest_right_singular_vector(a)?;
    let hn = Matrix3::from_row_slice(h.as_slice());
    let ti_inv = ti
        .try_inverse()
        .ok_or(Error::DegenerateConfiguration("normalization not invertible"))?;
    let m = ti_inv * hn * tw;
    Homography::new(m).map_err(|_| Error::DegenerateConfiguration("singular homography"))
}

/// Unit vector minimizing `‖A x‖`; errors when the minimizer is not unique.
pub(crate) fn smallest_right_singular_vector(a: DMatrix<f64>) -> Result<nalgebra::DVector<f64>> {
    let cols = a.ncols();
    // pad so the SVD exposes a full set of right singular vectors
    let a = if a.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (a.nrows(), cols)).copy_from(&a);
        p
    } else {
        a
    };
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateConfiguration("SVD failed"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (second, max) = (sv[order[1]], sv[order[sv.len() - 1]]);
    if !(max > 0.0) || second <= RANK_TOL * max {
        return Err(Error::DegenerateConfiguration("rank-deficient constraint system"));
    }
    Ok(v_t.row(order[0]).transpose())
}
