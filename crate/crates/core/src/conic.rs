//! Conic matrices: construction, projective transport and decomposition
//! into geometric ellipse parameters.
//!
//! A conic is stored as the six distinct entries of its symmetric
//! characteristic matrix
//!
//! ```text
//!     | a b d |
//! Q = | b c e |        a x² + 2b xy + c y² + 2d x + 2e y + f = 0
//!     | d e f |
//! ```
//!
//! Ellipse interiors are the points with `x̃ᵀ Q x̃ <= 0` once `Q` has been
//! scaled so that `a + c > 0`.

use nalgebra::{Matrix2, Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold on `ac - b²` after scaling `Q` so its largest entry has unit magnitude.
pub const ELLIPSE_EPS: f64 = 1e-12;

/// Threshold on `|det H|` after scaling `H` so its largest entry has unit magnitude.
pub const HOMOGRAPHY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl ConicMatrix {
    pub fn new(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Self {
        Self { a, b, c, d, e, f }
    }

    /// Builds the conic from a 3×3 matrix, averaging off-diagonal pairs.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self {
            a: m[(0, 0)],
            b: 0.5 * (m[(0, 1)] + m[(1, 0)]),
            c: m[(1, 1)],
            d: 0.5 * (m[(0, 2)] + m[(2, 0)]),
            e: 0.5 * (m[(1, 2)] + m[(2, 1)]),
            f: m[(2, 2)],
        }
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.a, self.b, self.d, //
            self.b, self.c, self.e, //
            self.d, self.e, self.f,
        )
    }

    /// Evaluates `x̃ᵀ Q x̃` at `(x, y, 1)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.a * x * x
            + 2.0 * self.b * x * y
            + self.c * y * y
            + 2.0 * self.d * x
            + 2.0 * self.e * y
            + self.f
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            a: s * self.a,
            b: s * self.b,
            c: s * self.c,
            d: s * self.d,
            e: s * self.e,
            f: s * self.f,
        }
    }

    fn entries(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Representative of the projective class: divided by its largest-magnitude entry.
    pub fn normalized(&self) -> Self {
        let pivot = self
            .entries()
            .into_iter()
            .fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot == 0.0 {
            *self
        } else {
            self.scaled(1.0 / pivot)
        }
    }

    /// True when both matrices describe the same conic up to scale.
    pub fn approx_eq_projective(&self, other: &Self, tol: f64) -> bool {
        let p = self.normalized().entries();
        let q = other.normalized().entries();
        p.iter().zip(q.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    pub fn determinant(&self) -> f64 {
        self.a * (self.c * self.f - self.e * self.e) - self.b * (self.b * self.f - self.e * self.d)
            + self.d * (self.b * self.e - self.c * self.d)
    }

    /// Scale-normalized copy with `a + c > 0` that passes the real-ellipse test.
    fn checked_ellipse(&self) -> Result<Self> {
        let m = self.max_abs();
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::DegenerateConic("zero or non-finite matrix"));
        }
        let mut q = self.scaled(1.0 / m);
        if q.a + q.c < 0.0 {
            q = q.scaled(-1.0);
        }
        let h1 = q.a * q.c - q.b * q.b;
        if h1 <= ELLIPSE_EPS {
            return Err(Error::DegenerateConic("ac - b² is not positive"));
        }
        // value of the quadratic form at the centre
        let f_center = q.determinant() / h1;
        if !(f_center < 0.0) {
            return Err(Error::DegenerateConic("imaginary or point ellipse"));
        }
        Ok(q)
    }
}

/// Conic of the circle with centre `(cx, cy)` and radius `r`.
pub fn circle_conic(cx: f64, cy: f64, r: f64) -> Result<ConicMatrix> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveRadius(r));
    }
    Ok(ConicMatrix::new(
        1.0,
        0.0,
        1.0,
        -cx,
        -cy,
        cx * cx + cy * cy - r * r,
    ))
}

/// Invertible 3×3 projective map of the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
    /// Inverse of `m / max|mᵢⱼ|`.
    inv_scaled: Matrix3<f64>,
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let scale = m.amax();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::SingularHomography(0.0));
        }
        let scaled = m / scale;
        let det = scaled.determinant();
        if det.abs() <= HOMOGRAPHY_EPS {
            return Err(Error::SingularHomography(det.abs()));
        }
        let inv_scaled = scaled
            .try_inverse()
            .ok_or(Error::SingularHomography(det.abs()))?;
        Ok(Self { m, inv_scaled })
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
            inv_scaled: Matrix3::identity(),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.inv_scaled).expect("inverse of a checked homography")
    }

    /// Maps a point and dehomogenizes. Returns `None` for points sent to infinity.
    pub fn apply(&self, p: &Point2<f64>) -> Option<Point2<f64>> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        if v.z == 0.0 {
            None
        } else {
            Some(Point2::new(v.x / v.z, v.y / v.z))
        }
    }

    /// Same matrix divided by its largest-magnitude entry.
    pub fn normalized(&self) -> Matrix3<f64> {
        let pivot = self
            .m
            .iter()
            .fold(0.0_f64, |m, &v| if v.abs() > m.abs() { v } else { m });
        self.m / pivot
    }
}

/// Transports a conic through `H`: returns `H⁻ᵀ Q H⁻¹`.
pub fn transform_conic(q: &ConicMatrix, h: &Homography) -> Result<ConicMatrix> {
    let hinv = &h.inv_scaled;
    let m = hinv.transpose() * q.to_matrix() * hinv;
    Ok(ConicMatrix::from_matrix(&m))
}

/// Centre of an ellipse, `Q⁻¹ (0, 0, 1)ᵀ` dehomogenized.
pub fn conic_center(q: &ConicMatrix) -> Result<Point2<f64>> {
    let q = q.checked_ellipse()?;
    // third column of adj(Q) is proportional to Q⁻¹ e₃
    let w = q.a * q.c - q.b * q.b;
    Ok(Point2::new(
        (q.b * q.e - q.c * q.d) / w,
        (q.b * q.d - q.a * q.e) / w,
    ))
}

/// Centre, semi-axes and orientation of an ellipse.
///
/// `m0` is the semi-axis along direction `alpha` and `m1` the one
/// perpendicular to it. `alpha` lies in `(-π/2, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseGeometry {
    pub tx: f64,
    pub ty: f64,
    pub m0: f64,
    pub m1: f64,
    pub alpha: f64,
}

impl EllipseGeometry {
    pub fn compose(&self) -> ConicMatrix {
        let (s, c) = self.alpha.sin_cos();
        let rot = Matrix2::new(c, -s, s, c);
        let inv_axes = Matrix2::new(1.0 / (self.m0 * self.m0), 0.0, 0.0, 1.0 / (self.m1 * self.m1));
        let a = rot * inv_axes * rot.transpose();
        let t = nalgebra::Vector2::new(self.tx, self.ty);
        let lin = -(a * t);
        ConicMatrix::new(
            a[(0, 0)],
            0.5 * (a[(0, 1)] + a[(1, 0)]),
            a[(1, 1)],
            lin.x,
            lin.y,
            t.dot(&(a * t)) - 1.0,
        )
    }
}

pub fn decompose_ellipse(q: &ConicMatrix) -> Result<EllipseGeometry> {
    let e = ellipse_axes(q)?;
    Ok(EllipseGeometry {
        tx: e.tx,
        ty: e.ty,
        m0: e.m0,
        m1: e.m1,
        alpha: e.sin.atan2(e.cos),
    })
}

/// Ellipse features with the major-axis direction as `(cos α, sin α)`,
/// `cos α > 0` or `α = π/2`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EllipseAxes {
    pub tx: f64,
    pub ty: f64,
    pub m0: f64,
    pub m1: f64,
    pub cos: f64,
    pub sin: f64,
}

pub(crate) fn ellipse_axes(q: &ConicMatrix) -> Result<EllipseAxes> {
    let q = q.checked_ellipse()?;
    let (a, b, c, d, e) = (q.a, q.b, q.c, q.d, q.e);
    let h1 = a * c - b * b;
    let h2 = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let tx = (b * e - c * d) / h1;
    let ty = (b * d - a * e) / h1;
    let f_center = q.determinant() / h1;

    if b == 0.0 {
        return Ok(EllipseAxes {
            tx,
            ty,
            m0: (-f_center / a).sqrt(),
            m1: (-f_center / c).sqrt(),
            cos: 1.0,
            sin: 0.0,
        });
    }

    let lambda_minor = 0.5 * (a + c - h2);
    let lambda_major = 0.5 * (a + c + h2);
    if !(lambda_minor > 0.0) {
        return Err(Error::DegenerateConic("negative axis radicand"));
    }
    // eigenvector of the smaller eigenvalue points along the major axis;
    // pick the cancellation-free form of its slope
    let slope = if c > a {
        -2.0 * b / (c - a + h2)
    } else {
        (c - a - h2) / (2.0 * b)
    };
    let cos = 1.0 / slope.mul_add(slope, 1.0).sqrt();
    Ok(EllipseAxes {
        tx,
        ty,
        m0: (-f_center / lambda_minor).sqrt(),
        m1: (-f_center / lambda_major).sqrt(),
        cos,
        sin: slope * cos,
    })
}
