//! Polynomial radial distortion `p_d = k(s) p_n` with `k(s) = Σ dᵢ sⁱ`,
//! `s = |p_n|²` and `d₀ = 1`.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MAX_DISTORTION_ORDER;

pub const UNDISTORT_TOL: f64 = 1e-12;
pub const UNDISTORT_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DistortionModel {
    /// `[1, d₁, …, d_{n_d}]`
    coeffs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for DistortionModel {
    type Error = Error;

    fn try_from(full: Vec<f64>) -> Result<Self> {
        match full.split_first() {
            Some((&1.0, rest)) => Self::new(rest),
            _ => Err(Error::InvalidParameter(
                "distortion coefficient list must start with d0 = 1".into(),
            )),
        }
    }
}

impl From<DistortionModel> for Vec<f64> {
    fn from(d: DistortionModel) -> Self {
        d.coeffs
    }
}

impl Default for DistortionModel {
    fn default() -> Self {
        Self::identity()
    }
}

impl DistortionModel {
    /// Model from `[d₁, …, d_{n_d}]`.
    pub fn new(higher: &[f64]) -> Result<Self> {
        if higher.len() > MAX_DISTORTION_ORDER {
            return Err(Error::InvalidDistortion {
                got: higher.len(),
                max: MAX_DISTORTION_ORDER,
            });
        }
        if higher.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter("non-finite distortion coefficient".into()));
        }
        let mut coeffs = Vec::with_capacity(higher.len() + 1);
        coeffs.push(1.0);
        coeffs.extend_from_slice(higher);
        Ok(Self { coeffs })
    }

    pub fn identity() -> Self {
        Self { coeffs: vec![1.0] }
    }

    /// `n_d`, the number of coefficients beyond `d₀`.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn higher(&self) -> &[f64] {
        &self.coeffs[1..]
    }

    /// `k(s)`
    #[inline]
    pub fn radial_factor(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &d| acc * s + d)
    }

    /// `k(s) + 2 s k'(s) = Σ (2i+1) dᵢ sⁱ`, the derivative of the radial map `r ↦ r k(r²)`.
    #[inline]
    pub fn radial_slope(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, &d)| acc * s + (2 * i + 1) as f64 * d)
    }

    pub fn distort(&self, p: &Point2<f64>) -> Point2<f64> {
        let k = self.radial_factor(p.x * p.x + p.y * p.y);
        Point2::new(k * p.x, k * p.y)
    }

    /// Determinant of the Jacobian of [`distort`](Self::distort) at `p`.
    pub fn area_jacobian(&self, p: &Point2<f64>) -> f64 {
        let s = p.x * p.x + p.y * p.y;
        self.radial_factor(s) * self.radial_slope(s)
    }

    /// Coefficients of `k (k + 2s k')` and `k² (k + 2s k')` as polynomials in `s`.
    pub fn w_coefficients(&self) -> WCoefficients {
        let d = &self.coeffs;
        let n = self.order();
        let w0 = (0..=2 * n)
            .map(|r| {
                let lo = r.saturating_sub(n);
                let hi = r.min(n);
                (lo..=hi).map(|i| (2 * i + 1) as f64 * d[i] * d[r - i]).sum()
            })
            .collect();
        let w1 = (0..=3 * n)
            .map(|r| {
                let lo = r.saturating_sub(2 * n);
                let hi = r.min(n);
                (lo..=hi)
                    .map(|i| {
                        let jlo = (r - i).saturating_sub(n);
                        let jhi = (r - i).min(n);
                        let inner: f64 = (jlo..=jhi).map(|j| d[j] * d[r - i - j]).sum();
                        (2 * i + 1) as f64 * d[i] * inner
                    })
                    .sum()
            })
            .collect();
        WCoefficients { w0, w1 }
    }

    /// Inverts the distortion for a single point.
    pub fn undistort(&self, p: &Point2<f64>) -> Result<Point2<f64>> {
        RadialInverse::new(self).undistort(p, UNDISTORT_TOL, UNDISTORT_MAX_ITER)
    }

    /// Samples the radial slope at 1000 uniform `s ∈ [0, s_max]`.
    pub fn invertibility_audit(&self, s_max: f64) -> InvertibilityReport {
        const SAMPLES: usize = 1000;
        let mut report = InvertibilityReport {
            s_max,
            min_slope: f64::INFINITY,
            argmin_s: 0.0,
            invertible: true,
        };
        for k in 0..SAMPLES {
            let s = s_max * k as f64 / (SAMPLES - 1) as f64;
            let slope = self.radial_slope(s);
            if slope < report.min_slope {
                report.min_slope = slope;
                report.argmin_s = s;
            }
        }
        report.invertible = report.min_slope > 0.0;
        report
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WCoefficients {
    /// `w₀r`, `r = 0..=2n_d`
    pub w0: Vec<f64>,
    /// `w₁r`, `r = 0..=3n_d`
    pub w1: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityReport {
    pub s_max: f64,
    pub min_slope: f64,
    pub argmin_s: f64,
    pub invertible: bool,
}

/// Reusable inverse of the radial map `r ↦ r k(r²)` on its first monotone branch.
#[derive(Debug, Clone)]
pub struct RadialInverse<'a> {
    model: &'a DistortionModel,
    /// First radius where the slope vanishes, or infinity.
    r_turn: f64,
    /// Largest reachable distorted radius.
    r_d_max: f64,
}

impl<'a> RadialInverse<'a> {
    pub fn new(model: &'a DistortionModel) -> Self {
        let r_turn = first_slope_root(model).map_or(f64::INFINITY, f64::sqrt);
        let r_d_max = if r_turn.is_finite() {
            r_turn * model.radial_factor(r_turn * r_turn)
        } else {
            f64::INFINITY
        };
        Self {
            model,
            r_turn,
            r_d_max,
        }
    }

    pub fn max_distorted_radius(&self) -> f64 {
        self.r_d_max
    }

    pub fn undistort(&self, p: &Point2<f64>, tol: f64, max_iter: usize) -> Result<Point2<f64>> {
        let rd = (p.x * p.x + p.y * p.y).sqrt();
        if rd == 0.0 {
            return Ok(*p);
        }
        let r = self.undistort_radius(rd, tol, max_iter)?;
        let scale = r / rd;
        Ok(Point2::new(p.x * scale, p.y * scale))
    }

    /// Solves `r k(r²) = rd` by Newton's method safeguarded with bisection.
    pub fn undistort_radius(&self, rd: f64, tol: f64, max_iter: usize) -> Result<f64> {
        if rd >= self.r_d_max {
            return Err(Error::NonInvertibleInRange(rd));
        }
        let m = self.model;
        let g = |r: f64| r * m.radial_factor(r * r) - rd;
        let mut lo = 0.0;
        let mut hi = if self.r_turn.is_finite() {
            self.r_turn
        } else {
            let mut h = rd.max(1.0);
            let mut n = 0;
            while g(h) < 0.0 {
                h *= 2.0;
                n += 1;
                if n > 200 {
                    return Err(Error::NonInvertibleInRange(rd));
                }
            }
            h
        };
        let mut r = rd.clamp(lo, hi);
        for _ in 0..max_iter {
            let val = g(r);
            if val.abs() < tol {
                return Ok(r);
            }
            if val < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            let slope = m.radial_slope(r * r);
            let next = r - val / slope;
            r = if slope > 0.0 && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
        }
        if g(r).abs() < tol {
            Ok(r)
        } else {
            Err(Error::NoConvergence(max_iter))
        }
    }
}

/// Smallest positive `s` where `Σ (2i+1) dᵢ sⁱ` changes sign.
fn first_slope_root(model: &DistortionModel) -> Option<f64> {
    if model.higher().iter().all(|&d| d >= 0.0) {
        return None;
    }
    const STEPS: usize = 4000;
    let (s_lo, s_hi) = (1e-8_f64, 1e8_f64);
    let ratio = (s_hi / s_lo).powf(1.0 / STEPS as f64);
    let mut prev = 0.0;
    let mut s = s_lo;
    for _ in 0..=STEPS {
        if model.radial_slope(s) <= 0.0 {
            let (mut a, mut b) = (prev, s);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if model.radial_slope(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Some(a);
        }
        prev = s;
        s *= ratio;
    }
    None
}
