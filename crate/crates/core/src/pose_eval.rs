//! Simultaneous recovery of `X` and `Y` from pose pairs satisfying
//! `T_mo,i · X = Y · T_ct,i`, and the pose error metric built on it.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{rotation_angle, PoseSE3};
use crate::error::{Error, Result};
pub use crate::io::PosePair;

const RANK_TOL: f64 = 1e-12;

/// Validated list of pose pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PosePairSet {
    pairs: Vec<PosePair>,
}

impl PosePairSet {
    pub fn new(pairs: Vec<PosePair>) -> Result<Self> {
        if pairs.len() < 3 {
            return Err(Error::InsufficientMotion);
        }
        let finite = |p: &PoseSE3| p.translation.iter().chain(p.rotation.matrix().iter()).all(|v| v.is_finite());
        if !pairs.iter().all(|p| finite(&p.t_mo) && finite(&p.t_ct)) {
            return Err(Error::InvalidParameter("non-finite pose".into()));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[PosePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Relative motions `(A_ij, B_ij)` for all `i < j`.
    fn relative_motions(&self) -> Vec<(PoseSE3, PoseSE3)> {
        let p = &self.pairs;
        let mut out = Vec::with_capacity(p.len() * (p.len() - 1) / 2);
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                let a = p[j].t_mo.inverse().compose(&p[i].t_mo);
                let b = p[j].t_ct.inverse().compose(&p[i].t_ct);
                out.push((a, b));
            }
        }
        out
    }
}

/// Nearest rotation to `m` in the Frobenius norm.
fn project_to_so3(m: &Matrix3<f64>) -> Rotation3<f64> {
    let svd = m.svd(true, true);
    let (mut u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    if (u * v_t).determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    Rotation3::from_matrix_unchecked(u * v_t)
}

/// Solves `A X = X B` over all relative motions, then averages `Y`.
pub fn solve_axxb(pairs: &PosePairSet) -> Result<(PoseSE3, PoseSE3)> {
    let motions = pairs.relative_motions();

    let mut m = Matrix3::zeros();
    for (a, b) in &motions {
        m += b.axis_angle() * a.axis_angle().transpose();
    }
    let mtm = SymmetricEigen::new(m.transpose() * m);
    let (lo, hi) = (mtm.eigenvalues.min(), mtm.eigenvalues.max());
    if !(hi > 0.0) || lo <= RANK_TOL * hi {
        return Err(Error::InsufficientMotion);
    }
    let inv_sqrt = Matrix3::from_diagonal(&mtm.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let q = mtm.eigenvectors;
    let rx = project_to_so3(&(q * inv_sqrt * q.transpose() * m.transpose()));

    let n = motions.len();
    let mut c = DMatrix::zeros(3 * n, 3);
    let mut d = DVector::zeros(3 * n);
    for (k, (a, b)) in motions.iter().enumerate() {
        let ck = Matrix3::identity() - a.rotation.matrix();
        let dk = a.translation - rx * b.translation;
        c.view_mut((3 * k, 0), (3, 3)).copy_from(&ck);
        d.rows_mut(3 * k, 3).copy_from(&dk);
    }
    let ctc = c.transpose() * &c;
    let eig = SymmetricEigen::new(ctc.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(hi > 0.0) || lo <= RANK_TOL * hi {
        return Err(Error::IllConditioned);
    }
    let tx = ctc
        .cholesky()
        .ok_or(Error::IllConditioned)?
        .solve(&(c.transpose() * d));
    let x = PoseSE3::new(rx, Vector3::new(tx[0], tx[1], tx[2]));

    let mut rsum = Matrix3::zeros();
    let mut tsum = Vector3::zeros();
    for p in pairs.pairs() {
        let y = p.t_mo.compose(&x).compose(&p.t_ct.inverse());
        rsum += y.rotation.matrix();
        tsum += y.translation;
    }
    let y = PoseSE3::new(project_to_so3(&rsum), tsum / pairs.len() as f64);
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    /// Mean geodesic angle, degrees.
    pub rotation_deg: f64,
    /// Mean translation difference, millimetres.
    pub translation_mm: f64,
}

/// Mean discrepancy between `T_mo,i` and `Y · T_ct,i · X⁻¹`.
pub fn pose_error(pairs: &PosePairSet, x: &PoseSE3, y: &PoseSE3) -> PoseError {
    let x_inv = x.inverse();
    let (mut rot, mut trans) = (0.0, 0.0);
    for p in pairs.pairs() {
        let pred = y.compose(&p.t_ct).compose(&x_inv);
        rot += rotation_angle(&(pred.rotation * p.t_mo.rotation.inverse()));
        trans += (pred.translation - p.t_mo.translation).norm();
    }
    let n = pairs.len() as f64;
    PoseError {
        rotation_deg: (rot / n).to_degrees(),
        translation_mm: 1000.0 * trans / n,
    }
}

/// Pairs `T_mo,i = Y · T_ct,i · X⁻¹` for the given camera-side poses.
pub fn synthesize_pairs(x: &PoseSE3, y: &PoseSE3, t_ct: &[PoseSE3]) -> Vec<PosePair> {
    let x_inv = x.inverse();
    t_ct.iter()
        .map(|c| PosePair {
            t_mo: y.compose(c).compose(&x_inv),
            t_ct: *c,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(w: [f64; 3], t: [f64; 3]) -> PoseSE3 {
        PoseSE3::from_axis_angle(Vector3::from(w), Vector3::from(t))
    }

    fn cams() -> Vec<PoseSE3> {
        vec![
            pose([0.1, 0.2, -0.3], [0.1, 0.0, 0.5]),
            pose([-0.4, 0.1, 0.2], [0.0, 0.2, 0.6]),
            pose([0.3, -0.3, 0.1], [-0.1, 0.1, 0.4]),
            pose([0.0, 0.5, 0.4], [0.2, -0.1, 0.7]),
        ]
    }

    #[test]
    fn identity_transforms() {
        let id = PoseSE3::identity();
        let set = PosePairSet::new(synthesize_pairs(&id, &id, &cams())).unwrap();
        let (x, y) = solve_axxb(&set).unwrap();
        for p in [x, y] {
            assert!(p.rotation_distance(&id) < 1e-12);
            assert!(p.translation.norm() < 1e-12);
        }
    }

    #[test]
    fn single_axis_is_degenerate() {
        let c: Vec<_> = (0..5).map(|i| pose([0.0, 0.0, 0.2 * i as f64], [0.1 * i as f64, 0.0, 1.0])).collect();
        let set = PosePairSet::new(synthesize_pairs(&pose([0.1, 0.2, 0.3], [0.0; 3]), &PoseSE3::identity(), &c)).unwrap();
        assert!(matches!(solve_axxb(&set), Err(Error::InsufficientMotion)));
    }

    #[test]
    fn too_few_pairs() {
        let id = PoseSE3::identity();
        assert!(PosePairSet::new(synthesize_pairs(&id, &id, &cams()[..2])).is_err());
    }

    #[test]
    fn perturbed_x_gives_one_degree() {
        let x = pose([0.2, -0.1, 0.3], [0.01, 0.02, 0.03]);
        let y = pose([-0.5, 0.2, 0.1], [0.3, -0.2, 1.0]);
        let set = PosePairSet::new(synthesize_pairs(&x, &y, &cams())).unwrap();
        let exact = pose_error(&set, &x, &y);
        assert!(exact.rotation_deg < 1e-10 && exact.translation_mm < 1e-9);
        let bump = PoseSE3::from_axis_angle(Vector3::new(0.0, 0.0, 1f64.to_radians()), Vector3::zeros());
        let e = pose_error(&set, &x.compose(&bump), &y);
        assert!((e.rotation_deg - 1.0).abs() < 1e-9, "{}", e.rotation_deg);
    }
}
