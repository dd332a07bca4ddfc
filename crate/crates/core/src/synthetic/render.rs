use std::f64::consts::PI;

use nalgebra::{Point2, Vector3};

use crate::camera::TargetCircle;
use crate::conic::Homography;
use crate::distortion::{RadialInverse, UNDISTORT_MAX_ITER, UNDISTORT_TOL};
use crate::error::{Error, Result};
use crate::par::Execution;

use super::image::{gaussian_blur, GrayImage};
use super::scene::SyntheticScene;

pub const BACKGROUND: f64 = 255.0;
pub const FOREGROUND: f64 = 0.0;

/// Pixel-space bounding box, half-open.
#[derive(Debug, Clone, Copy)]
struct PixelBox {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

/// Rasterizes one view with the scene's supersampling and blur.
pub fn render_view(scene: &SyntheticScene, view: usize, exec: Execution) -> Result<GrayImage> {
    let cfg = &scene.config;
    let values = render_coverage(scene, view, cfg.supersample, exec)?;
    let mut intensity: Vec<f64> = values
        .iter()
        .map(|&c| BACKGROUND + (FOREGROUND - BACKGROUND) * c)
        .collect();
    if cfg.blur_sigma > 0.0 {
        gaussian_blur(&mut intensity, cfg.width, cfg.height, cfg.blur_sigma, exec);
    }
    Ok(GrayImage::from_intensity(cfg.width, cfg.height, &intensity))
}

/// Fraction of each pixel covered by a target circle, row-major.
///
/// Pixels away from a boundary are classified from their centre. Pixels
/// the boundary passes through are split into `supersample²` cells, each
/// covered by the exact area of the locally straight boundary.
pub fn render_coverage(
    scene: &SyntheticScene,
    view: usize,
    supersample: usize,
    exec: Execution,
) -> Result<Vec<f64>> {
    let cfg = &scene.config;
    if supersample == 0 {
        return Err(Error::InvalidParameter("supersampling factor must be positive".into()));
    }
    let pose = scene.pose(view)?;
    let h = pose.plane_homography()?;
    let circles = scene.circles();
    let boxes = circles
        .iter()
        .map(|c| circle_box(c, &h, scene))
        .collect::<Result<Vec<_>>>()?;

    let (width, height) = (cfg.width, cfg.height);
    let field = EdgeField {
        inverse: RadialInverse::new(&cfg.distortion),
        k: cfg.intrinsics,
        h_inv: h.inverse(),
    };
    let step = 1.0 / supersample as f64;
    let mut coverage = vec![0.0; width * height];
    let failure = std::sync::Mutex::new(None);

    exec.for_each_chunk_mut(&mut coverage, width, |y, row| {
        for (c, b) in circles.iter().zip(&boxes) {
            if y < b.y0 || y >= b.y1 {
                continue;
            }
            for x in b.x0..b.x1 {
                let centre = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                match pixel_coverage(&field, c, &centre, supersample, step) {
                    Ok(v) => row[x] += v,
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                    }
                }
            }
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(coverage)
}

/// Signed distance to a circle boundary, measured on the target plane.
struct EdgeField<'a> {
    inverse: RadialInverse<'a>,
    k: crate::camera::Intrinsics,
    h_inv: Homography,
}

impl EdgeField<'_> {
    /// Positive outside; `None` where the pixel does not see the target.
    fn eval(&self, c: &TargetCircle, u: &Point2<f64>) -> Result<Option<f64>> {
        let pd = self.k.unproject(u);
        let pn = match self.inverse.undistort(&pd, UNDISTORT_TOL, UNDISTORT_MAX_ITER) {
            Ok(p) => p,
            Err(Error::NonInvertibleInRange(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let q = self.h_inv.matrix() * Vector3::new(pn.x, pn.y, 1.0);
        if q.z <= 0.0 {
            return Ok(None);
        }
        let dx = q.x / q.z - c.center.x;
        let dy = q.y / q.z - c.center.y;
        Ok(Some(dx.hypot(dy) - c.radius))
    }
}

/// Pixel offset used for the distance gradient.
const GRAD_STEP: f64 = 0.25;

fn pixel_coverage(
    field: &EdgeField<'_>,
    c: &TargetCircle,
    centre: &Point2<f64>,
    supersample: usize,
    step: f64,
) -> Result<f64> {
    let Some(d0) = field.eval(c, centre)? else {
        return Ok(0.0);
    };
    let probe = |dx: f64, dy: f64| field.eval(c, &Point2::new(centre.x + dx, centre.y + dy));
    let (Some(xp), Some(xm), Some(yp), Some(ym)) = (
        probe(GRAD_STEP, 0.0)?,
        probe(-GRAD_STEP, 0.0)?,
        probe(0.0, GRAD_STEP)?,
        probe(0.0, -GRAD_STEP)?,
    ) else {
        return Ok(0.0);
    };
    let gx = (xp - xm) / (2.0 * GRAD_STEP);
    let gy = (yp - ym) / (2.0 * GRAD_STEP);
    let g = gx.hypot(gy);
    if !(g > 0.0 && g.is_finite()) {
        return Ok(if d0 <= 0.0 { 1.0 } else { 0.0 });
    }
    // signed distance in pixels; a unit square reaches √2/2 from its centre
    let sd = d0 / g;
    if sd <= -1.0 {
        return Ok(1.0);
    }
    if sd >= 1.0 {
        return Ok(0.0);
    }
    let (nx, ny) = (gx / g, gy / g);
    let mut acc = 0.0;
    for sy in 0..supersample {
        for sx in 0..supersample {
            let u = Point2::new(
                centre.x - 0.5 + (sx as f64 + 0.5) * step,
                centre.y - 0.5 + (sy as f64 + 0.5) * step,
            );
            if let Some(d) = field.eval(c, &u)? {
                acc += square_below_line(nx, ny, -d / (g * step));
            }
        }
    }
    Ok(acc / (supersample * supersample) as f64)
}

/// Area of `{(x, y) ∈ [-½, ½]² : nx·x + ny·y ≤ t}` for a unit normal.
fn square_below_line(nx: f64, ny: f64, t: f64) -> f64 {
    let (a, b) = if nx.abs() >= ny.abs() { (nx.abs(), ny.abs()) } else { (ny.abs(), nx.abs()) };
    let p = 0.5 * (a + b);
    let q = 0.5 * (a - b);
    if t <= -p {
        0.0
    } else if t >= p {
        1.0
    } else if t < -q {
        (t + p) * (t + p) / (2.0 * a * b)
    } else if t <= q {
        0.5 + t / a
    } else {
        1.0 - (p - t) * (p - t) / (2.0 * a * b)
    }
}

fn circle_box(c: &TargetCircle, h: &Homography, scene: &SyntheticScene) -> Result<PixelBox> {
    let cfg = &scene.config;
    let n = 128;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let t = 2.0 * PI * i as f64 / n as f64;
        let pw = Point2::new(c.center.x + c.radius * t.cos(), c.center.y + c.radius * t.sin());
        let pn = h.apply(&pw).ok_or(Error::BehindCamera)?;
        let px = cfg.intrinsics.project(&cfg.distortion.distort(&pn));
        x0 = x0.min(px.x);
        x1 = x1.max(px.x);
        y0 = y0.min(px.y);
        y1 = y1.max(px.y);
    }
    let margin = 2.0;
    let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
    Ok(PixelBox {
        x0: clamp((x0 - margin).floor(), cfg.width),
        x1: clamp((x1 + margin).ceil(), cfg.width),
        y0: clamp((y0 - margin).floor(), cfg.height),
        y1: clamp((y1 + margin).ceil(), cfg.height),
    })
}
