//! Pinhole intrinsics, rigid poses and circular target features.

use nalgebra::{Matrix3, Point2, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::conic::{circle_conic, ConicMatrix, Homography};
use crate::error::{Error, Result};

/// Rejection threshold on `|det [r₁ r₂ t]|` after column normalization.
pub const VIEWPOINT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    #[serde(default)]
    pub skew: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, skew: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || ![skew, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive and finite (fx = {fx}, fy = {fy})"
            )));
        }
        Ok(Self { fx, fy, skew, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Distorted normalized coordinates to pixels.
    #[inline]
    pub fn project(&self, p: &Point2<f64>) -> Point2<f64> {
        Point2::new(
            self.fx * p.x + self.skew * p.y + self.cx,
            self.fy * p.y + self.cy,
        )
    }

    /// Pixels to distorted normalized coordinates.
    #[inline]
    pub fn unproject(&self, u: &Point2<f64>) -> Point2<f64> {
        let y = (u.y - self.cy) / self.fy;
        Point2::new((u.x - self.cx - self.skew * y) / self.fx, y)
    }
}

/// Rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::from_scaled_axis(axis_angle),
            translation,
        }
    }

    pub fn axis_angle(&self) -> Vector3<f64> {
        self.rotation.scaled_axis()
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self {
            rotation: r,
            translation: -(r * self.translation),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Homography `[r₁ r₂ t]` from target-plane points (`z = 0`) to the normalized plane.
    pub fn plane_homography(&self) -> Result<Homography> {
        let r = self.rotation.matrix();
        let m = Matrix3::from_columns(&[r.column(0).into(), r.column(1).into(), self.translation]);
        let scaled = Matrix3::from_columns(&[
            m.column(0).normalize(),
            m.column(1).normalize(),
            m.column(2) / m.column(2).norm().max(f64::MIN_POSITIVE),
        ]);
        let det = scaled.determinant();
        if !(det.abs() >= VIEWPOINT_EPS) {
            return Err(Error::DegenerateViewpoint(det.abs()));
        }
        Homography::new(m).map_err(|_| Error::DegenerateViewpoint(det.abs()))
    }

    /// Geodesic rotation distance in radians.
    pub fn rotation_distance(&self, other: &Self) -> f64 {
        rotation_angle(&(self.rotation * other.rotation.inverse()))
    }
}

/// Rotation angle via `atan2`, accurate near zero and near π.
pub fn rotation_angle(r: &Rotation3<f64>) -> f64 {
    let m = r.matrix();
    let sin2 = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
    sin2.atan2(m.trace() - 1.0)
}

/// Serialized form: axis-angle rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub axis_angle: [f64; 3],
    pub translation: [f64; 3],
}

impl From<&PoseSE3> for PoseRecord {
    fn from(p: &PoseSE3) -> Self {
        let w = p.axis_angle();
        Self {
            axis_angle: [w.x, w.y, w.z],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl From<&PoseRecord> for PoseSE3 {
    fn from(r: &PoseRecord) -> Self {
        PoseSE3::from_axis_angle(Vector3::from(r.axis_angle), Vector3::from(r.translation))
    }
}

impl Serialize for PoseSE3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseSE3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PoseRecord::deserialize(d).map(|r| PoseSE3::from(&r))
    }
}

/// Circle on the target plane, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetCircle {
    pub center: Point2<f64>,
    pub radius: f64,
}

impl TargetCircle {
    pub fn new(center: Point2<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::NonPositiveRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn conic(&self) -> ConicMatrix {
        circle_conic(self.center.x, self.center.y, self.radius).expect("radius checked positive")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn frontal_homography() {
        let pose = PoseSE3::new(Rotation3::identity(), Vector3::new(0.0, 0.0, 1.0));
        let h = pose.plane_homography().unwrap();
        assert_eq!(*h.matrix(), Matrix3::identity());
        let p = h.apply(&Point2::new(0.2, -0.3)).unwrap();
        assert_eq!(p, Point2::new(0.2, -0.3));
    }

    #[test]
    fn random_pose_homography_matches_projection() {
        let pose = PoseSE3::from_axis_angle(Vector3::new(0.3, -0.5, 0.2), Vector3::new(0.1, -0.05, 0.8));
        let h = pose.plane_homography().unwrap();
        for k in 0..100 {
            let x = -0.2 + 0.004 * k as f64;
            let y = 0.15 - 0.003 * k as f64;
            let c = pose.transform(&Vector3::new(x, y, 0.0));
            let p = h.apply(&Point2::new(x, y)).unwrap();
            assert_relative_eq!(p.x, c.x / c.z, epsilon = 1e-14);
            assert_relative_eq!(p.y, c.y / c.z, epsilon = 1e-14);
        }
    }

    #[test]
    fn edge_on_view_rejected() {
        // camera centre in the target plane
        let pose = PoseSE3::from_axis_angle(
            Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0),
            Vector3::new(0.0, 0.0, 0.0),
        );
        assert!(matches!(pose.plane_homography(), Err(Error::DegenerateViewpoint(_))));
    }

    #[test]
    fn intrinsics_round_trip() {
        let k = Intrinsics::new(600.0, 610.0, 1.5, 600.0, 450.0).unwrap();
        let p = Point2::new(0.3, -0.2);
        assert_relative_eq!(k.unproject(&k.project(&p)), p, epsilon = 1e-15);
        assert!(Intrinsics::new(-1.0, 600.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn pose_inverse_and_serde() {
        let pose = PoseSE3::from_axis_angle(Vector3::new(0.1, 0.2, -0.3), Vector3::new(1.0, 2.0, 3.0));
        let id = pose.compose(&pose.inverse());
        assert!(id.translation.norm() < 1e-14);
        assert!(rotation_angle(&id.rotation) < 1e-15);
        let s = serde_json::to_string(&pose).unwrap();
        let back: PoseSE3 = serde_json::from_str(&s).unwrap();
        assert!(back.rotation_distance(&pose) < 1e-15);
    }
}
