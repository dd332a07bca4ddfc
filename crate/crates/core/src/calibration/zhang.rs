use nalgebra::{DMatrix, Matrix3, Rotation3, Vector3};

use crate::camera::{Intrinsics, PoseSE3};
use crate::conic::Homography;
use crate::error::{Error, Result};

use super::homography::smallest_right_singular_vector;

/// `v_ij` of the absolute-conic constraint, over `b = [B11, B12, B22, B13, B23, B33]`.
fn v_ij(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 6] {
    let (hi, hj) = (h.column(i), h.column(j));
    [
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ]
}

/// Closed-form intrinsics from plane homographies (pixels ← target plane).
///
/// With `estimate_skew == false` the skew is fixed at zero and two views
/// suffice; otherwise three are needed.
pub fn zhang_init(homographies: &[Homography], estimate_skew: bool) -> Result<Intrinsics> {
    let needed = if estimate_skew { 3 } else { 2 };
    if homographies.len() < needed {
        return Err(Error::DegenerateConfiguration("too few views for closed-form intrinsics"));
    }

    // condition pixel units: centre on the mean image of the target origin
    let origins: Vec<_> = homographies
        .iter()
        .map(|h| {
            let m = h.matrix();
            (m[(0, 2)] / m[(2, 2)], m[(1, 2)] / m[(2, 2)])
        })
        .collect();
    let n = origins.len() as f64;
    let (ox, oy) = origins.iter().fold((0.0, 0.0), |(x, y), o| (x + o.0 / n, y + o.1 / n));
    let scale = 1.0 / ox.abs().max(oy.abs()).max(1.0);
    let t = Matrix3::new(scale, 0.0, -scale * ox, 0.0, scale, -scale * oy, 0.0, 0.0, 1.0);

    let cols: Vec<usize> = if estimate_skew { vec![0, 1, 2, 3, 4, 5] } else { vec![0, 2, 3, 4, 5] };
    let mut a = DMatrix::<f64>::zeros(2 * homographies.len(), cols.len());
    for (k, h) in homographies.iter().enumerate() {
        let m = t * h.matrix();
        let m = m / m.norm();
        let v12 = v_ij(&m, 0, 1);
        let v11 = v_ij(&m, 0, 0);
        let v22 = v_ij(&m, 1, 1);
        for (c, &idx) in cols.iter().enumerate() {
            a[(2 * k, c)] = v12[idx];
            a[(2 * k + 1, c)] = v11[idx] - v22[idx];
        }
    }
    let sol = smallest_right_singular_vector(a)?;
    let mut b = [0.0; 6];
    for (c, &idx) in cols.iter().enumerate() {
        b[idx] = sol[c];
    }
    if b[0] < 0.0 {
        b.iter_mut().for_each(|v| *v = -*v);
    }
    let [b11, b12, b22, b13, b23, b33] = b;

    let den = b11 * b22 - b12 * b12;
    if !(b11 > 0.0 && den > 0.0) {
        return Err(Error::NonPositiveDefinite);
    }
    let v0 = (b12 * b13 - b11 * b23) / den;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    if !(lambda / b11 > 0.0) {
        return Err(Error::NonPositiveDefinite);
    }
    let alpha = (lambda / b11).sqrt();
    let beta = (lambda * b11 / den).sqrt();
    let gamma = -b12 * alpha * alpha * beta / lambda;
    let u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;

    // undo the conditioning transform
    let kn = Matrix3::new(alpha, gamma, u0, 0.0, beta, v0, 0.0, 0.0, 1.0);
    let k = t.try_inverse().expect("conditioning transform is invertible") * kn;
    Intrinsics::new(
        k[(0, 0)],
        k[(1, 1)],
        if estimate_skew { k[(0, 1)] } else { 0.0 },
        k[(0, 2)],
        k[(1, 2)],
    )
    .map_err(|_| Error::NonPositiveDefinite)
}

/// Pose of the target plane from `H ≃ K [r₁ r₂ t]`.
pub fn init_extrinsics(h: &Homography, k: &Intrinsics) -> Result<PoseSE3> {
    let k_inv = k
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("intrinsic matrix is singular".into()))?;
    let m = k_inv * h.matrix();
    let norm1 = m.column(0).norm();
    if !(norm1 > 0.0) {
        return Err(Error::DegenerateConfiguration("homography has a null column"));
    }
    let mut lambda = 1.0 / norm1;
    if m[(2, 2)] * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1: Vector3<f64> = m.column(0) * lambda;
    let r2: Vector3<f64> = m.column(1) * lambda;
    let t: Vector3<f64> = m.column(2) * lambda;
    if !(t.z > 0.0) {
        return Err(Error::BehindCamera);
    }
    let r3 = r1.cross(&r2);
    let q = Matrix3::from_columns(&[r1, r2, r3]);
    // nearest rotation: orthogonal polar factor
    let svd = q.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    Ok(PoseSE3::new(Rotation3::from_matrix_unchecked(r), t))
}
