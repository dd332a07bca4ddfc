//! Image-plane control-point predictors for a target circle.
//!
//! All four estimators map a target circle, its pose, the intrinsics and
//! the distortion model to a pixel position:
//!
//! - [`Estimator::Unbiased`]: centroid of the distorted image of the circle,
//!   in closed form from moment vectors of the normalized-plane ellipse.
//! - [`Estimator::PointBased`]: image of the circle centre.
//! - [`Estimator::ConicBased`]: image of the centre of the projected ellipse.
//! - [`Estimator::Numerical`]: the distorted centroid by polar quadrature.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, PoseSE3, TargetCircle};
use crate::conic::{conic_center, decompose_ellipse, transform_conic, ConicMatrix, Homography};
use crate::distortion::{DistortionModel, WCoefficients};
use crate::error::{Error, Result};
use crate::moments::{fill_rotated_moment_vectors, MAX_MOMENT_ORDER};
use crate::quadrature::{angular_nodes, GaussLegendre};

/// Sample count of the dense reference integration (4096 × 4096 nodes).
pub const ORACLE_SAMPLES: usize = 4096 * 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Estimator {
    Unbiased,
    PointBased,
    ConicBased,
    Numerical(usize),
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Unbiased => write!(f, "unbiased"),
            Estimator::PointBased => write!(f, "point"),
            Estimator::ConicBased => write!(f, "conic"),
            Estimator::Numerical(n) => write!(f, "numerical:{n}"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unbiased" => Ok(Estimator::Unbiased),
            "point" => Ok(Estimator::PointBased),
            "conic" => Ok(Estimator::ConicBased),
            _ => {
                let n = s
                    .strip_prefix("numerical:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator '{s}'")))?;
                if n < 4 {
                    return Err(Error::InvalidParameter(format!(
                        "numerical estimator needs at least 4 samples, got {n}"
                    )));
                }
                Ok(Estimator::Numerical(n))
            }
        }
    }
}

impl TryFrom<String> for Estimator {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> Self {
        e.to_string()
    }
}

/// `[r₁ r₂ t]`, mapping the target plane to the normalized plane.
pub fn extrinsic_homography(pose: &PoseSE3) -> Result<Homography> {
    pose.plane_homography()
}

/// Camera model shared by many circle projections; caches the w-coefficients.
#[derive(Debug, Clone)]
pub struct Projector {
    pub intrinsics: Intrinsics,
    pub distortion: DistortionModel,
    w: WCoefficients,
}

impl Projector {
    pub fn new(intrinsics: Intrinsics, distortion: DistortionModel) -> Self {
        let w = distortion.w_coefficients();
        Self {
            intrinsics,
            distortion,
            w,
        }
    }

    pub fn estimate(
        &self,
        estimator: Estimator,
        circle: &TargetCircle,
        h: &Homography,
    ) -> Result<Point2<f64>> {
        match estimator {
            Estimator::Unbiased => self.unbiased(&transform_conic(&circle.conic(), h)?),
            Estimator::PointBased => self.point_based(circle, h),
            Estimator::ConicBased => self.conic_based(&transform_conic(&circle.conic(), h)?),
            Estimator::Numerical(n) => self.numerical(&transform_conic(&circle.conic(), h)?, n),
        }
    }

    /// Distorted-image centroid of the ellipse `q_n` in the normalized plane.
    pub fn unbiased(&self, q_n: &ConicMatrix) -> Result<Point2<f64>> {
        if self.distortion.order() == 0 {
            return self.conic_based(q_n);
        }
        let pd = self.distorted_centroid(q_n)?;
        Ok(self.intrinsics.project(&pd))
    }

    /// Centroid in distorted normalized coordinates.
    pub fn distorted_centroid(&self, q_n: &ConicMatrix) -> Result<Point2<f64>> {
        let nd = self.distortion.order();
        let mut vs = [[0.0; 3]; MAX_MOMENT_ORDER + 1];
        fill_rotated_moment_vectors(q_n, 3 * nd, &mut vs)?;
        let (mut mx, mut my, mut m0) = (0.0, 0.0, 0.0);
        for (r, v) in vs[..=3 * nd].iter().enumerate() {
            let w1 = self.w.w1[r];
            mx += w1 * v[0];
            my += w1 * v[1];
            if r <= 2 * nd {
                m0 += self.w.w0[r] * v[2];
            }
        }
        Ok(Point2::new(mx / m0, my / m0))
    }

    pub fn point_based(&self, circle: &TargetCircle, h: &Homography) -> Result<Point2<f64>> {
        let pn = h
            .apply(&circle.center)
            .ok_or(Error::DegenerateViewpoint(0.0))?;
        Ok(self.intrinsics.project(&self.distortion.distort(&pn)))
    }

    pub fn conic_based(&self, q_n: &ConicMatrix) -> Result<Point2<f64>> {
        let c = conic_center(q_n)?;
        Ok(self.intrinsics.project(&self.distortion.distort(&c)))
    }

    /// Polar product quadrature of the distorted centroid with
    /// `⌈√n⌉` Gauss–Legendre radii × `⌈√n⌉` midpoint angles.
    pub fn numerical(&self, q_n: &ConicMatrix, n: usize) -> Result<Point2<f64>> {
        if n < 4 {
            return Err(Error::InvalidParameter(format!(
                "numerical estimator needs at least 4 samples, got {n}"
            )));
        }
        let g = decompose_ellipse(q_n)?;
        let side = (n as f64).sqrt().ceil() as usize;
        let gl = GaussLegendre::cached(side);
        let ring = ring_offsets(side, g.m0, g.m1, g.alpha);

        let d = self.distortion.coeffs();
        let mut kc = [0.0; 9];
        let mut sc = [0.0; 9];
        for (i, &di) in d.iter().enumerate() {
            kc[i] = di;
            sc[i] = (2 * i + 1) as f64 * di;
        }
        let nd = d.len() - 1;

        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for (&rho, &wr) in gl.nodes.iter().zip(&gl.weights) {
            let (mut rx, mut ry, mut rw) = (0.0, 0.0, 0.0);
            for &(ox, oy) in ring.iter() {
                let x = g.tx + rho * ox;
                let y = g.ty + rho * oy;
                let s = x * x + y * y;
                let mut k = kc[nd];
                let mut slope = sc[nd];
                for i in (0..nd).rev() {
                    k = k * s + kc[i];
                    slope = slope * s + sc[i];
                }
                let w = k * slope;
                rx += w * k * x;
                ry += w * k * y;
                rw += w;
            }
            let scale = wr * rho;
            sx += scale * rx;
            sy += scale * ry;
            sw += scale * rw;
        }
        Ok(self
            .intrinsics
            .project(&Point2::new(sx / sw, sy / sw)))
    }
}

/// Unit-ring sample offsets `R(α) (a cos θ, b sin θ)`.
fn ring_offsets(n: usize, a: f64, b: f64, alpha: f64) -> Arc<[(f64, f64)]> {
    let (sa, ca) = alpha.sin_cos();
    angular_nodes(n)
        .into_iter()
        .map(|(c, s)| {
            let u = a * c;
            let v = b * s;
            (ca * u - sa * v, sa * u + ca * v)
        })
        .collect()
}

pub fn estimate_unbiased(
    circle: &TargetCircle,
    pose: &PoseSE3,
    k: &Intrinsics,
    d: &DistortionModel,
) -> Result<Point2<f64>> {
    estimate(Estimator::Unbiased, circle, pose, k, d)
}

pub fn estimate_point_based(
    circle: &TargetCircle,
    pose: &PoseSE3,
    k: &Intrinsics,
    d: &DistortionModel,
) -> Result<Point2<f64>> {
    estimate(Estimator::PointBased, circle, pose, k, d)
}

pub fn estimate_conic_based(
    circle: &TargetCircle,
    pose: &PoseSE3,
    k: &Intrinsics,
    d: &DistortionModel,
) -> Result<Point2<f64>> {
    estimate(Estimator::ConicBased, circle, pose, k, d)
}

pub fn estimate_numerical(
    circle: &TargetCircle,
    pose: &PoseSE3,
    k: &Intrinsics,
    d: &DistortionModel,
    n: usize,
) -> Result<Point2<f64>> {
    estimate(Estimator::Numerical(n), circle, pose, k, d)
}

pub fn estimate(
    estimator: Estimator,
    circle: &TargetCircle,
    pose: &PoseSE3,
    k: &Intrinsics,
    d: &DistortionModel,
) -> Result<Point2<f64>> {
    let h = extrinsic_homography(pose)?;
    Projector::new(*k, d.clone()).estimate(estimator, circle, &h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn camera() -> Intrinsics {
        Intrinsics::new(600.0, 600.0, 0.0, 600.0, 450.0).unwrap()
    }

    fn tilted() -> PoseSE3 {
        PoseSE3::from_axis_angle(Vector3::new(0.4, -0.3, 0.1), Vector3::new(-0.1, 0.05, 0.6))
    }

    #[test]
    fn parse_and_display() {
        for s in ["unbiased", "point", "conic", "numerical:1600"] {
            assert_eq!(s.parse::<Estimator>().unwrap().to_string(), s);
        }
        assert!("numerical:2".parse::<Estimator>().is_err());
        assert!("numeric".parse::<Estimator>().is_err());
    }

    #[test]
    fn identity_distortion_collapses_to_conic() {
        let c = TargetCircle::new(Point2::new(0.05, 0.02), 0.03).unwrap();
        let d = DistortionModel::identity();
        let u = estimate_unbiased(&c, &tilted(), &camera(), &d).unwrap();
        let cb = estimate_conic_based(&c, &tilted(), &camera(), &d).unwrap();
        assert_eq!(u, cb);
    }

    #[test]
    fn frontal_identity_point_matches_unbiased() {
        let c = TargetCircle::new(Point2::new(0.05, 0.02), 0.03).unwrap();
        let pose = PoseSE3::from_axis_angle(Vector3::zeros(), Vector3::new(0.0, 0.0, 0.7));
        let d = DistortionModel::identity();
        let u = estimate_unbiased(&c, &pose, &camera(), &d).unwrap();
        let p = estimate_point_based(&c, &pose, &camera(), &d).unwrap();
        assert!((u - p).norm() < 1e-10);
    }

    #[test]
    fn perspective_bias_on_tilted_view() {
        let c = TargetCircle::new(Point2::new(0.05, 0.02), 0.03).unwrap();
        let d = DistortionModel::identity();
        let u = estimate_unbiased(&c, &tilted(), &camera(), &d).unwrap();
        let p = estimate_point_based(&c, &tilted(), &camera(), &d).unwrap();
        assert!((u - p).norm() > 0.05, "gap {}", (u - p).norm());
    }

    #[test]
    fn tiny_radius_agreement() {
        let c = TargetCircle::new(Point2::new(0.05, 0.02), 1e-6).unwrap();
        let d = DistortionModel::new(&[-0.2]).unwrap();
        let u = estimate_unbiased(&c, &tilted(), &camera(), &d).unwrap();
        let p = estimate_point_based(&c, &tilted(), &camera(), &d).unwrap();
        let cb = estimate_conic_based(&c, &tilted(), &camera(), &d).unwrap();
        let n = estimate_numerical(&c, &tilted(), &camera(), &d, 1600).unwrap();
        assert!((u - p).norm() < 1e-6);
        assert!((u - cb).norm() < 1e-6);
        assert!((u - n).norm() < 1e-6);
    }

    #[test]
    fn numerical_converges_to_unbiased() {
        let c = TargetCircle::new(Point2::new(0.05, 0.02), 0.05).unwrap();
        let d = DistortionModel::new(&[-0.2]).unwrap();
        let u = estimate_unbiased(&c, &tilted(), &camera(), &d).unwrap();
        let n = estimate_numerical(&c, &tilted(), &camera(), &d, 1600).unwrap();
        assert!((u - n).norm() < 1e-5, "gap {}", (u - n).norm());
    }

    #[test]
    fn low_sample_numerical_without_distortion() {
        let c = TargetCircle::new(Point2::new(0.05, 0.02), 0.05).unwrap();
        let d = DistortionModel::identity();
        let n = estimate_numerical(&c, &tilted(), &camera(), &d, 25).unwrap();
        let cb = estimate_conic_based(&c, &tilted(), &camera(), &d).unwrap();
        assert!((n - cb).norm() < 1e-3);
    }
}
