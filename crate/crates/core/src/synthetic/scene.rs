use std::f64::consts::PI;

use nalgebra::{Point2, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, PoseRecord, PoseSE3, TargetCircle};
use crate::distortion::{DistortionModel, RadialInverse};
use crate::error::{Error, Result};

/// Pose samples rejected before a scene is declared infeasible.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    #[default]
    CircleGrid,
    /// Accepted in files for completeness; never rendered or measured.
    Checkerboard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub rows: usize,
    pub cols: usize,
    /// Centre-to-centre distance, metres.
    pub spacing: f64,
    /// Circle radius, metres.
    pub radius: f64,
    #[serde(default)]
    pub pattern: PatternKind,
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows * self.cols < 4 {
            return Err(Error::InvalidParameter(format!(
                "target needs at least 4 circles, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.radius > 0.0) {
            return Err(Error::NonPositiveRadius(self.radius));
        }
        if !(self.spacing > 2.0 * self.radius) {
            return Err(Error::InvalidParameter(format!(
                "spacing {} must exceed the circle diameter {}",
                self.spacing,
                2.0 * self.radius
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Circles in row-major order, grid centred on the target origin.
    pub fn circles(&self) -> Vec<TargetCircle> {
        let x0 = 0.5 * (self.cols as f64 - 1.0) * self.spacing;
        let y0 = 0.5 * (self.rows as f64 - 1.0) * self.spacing;
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| TargetCircle {
                center: Point2::new(c as f64 * self.spacing - x0, r as f64 * self.spacing - y0),
                radius: self.radius,
            })
            .collect()
    }
}

/// Everything needed to draw a scene; also the JSON scene-file body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub target: TargetSpec,
    pub intrinsics: Intrinsics,
    pub distortion: DistortionModel,
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub blur_sigma: f64,
    #[serde(default = "default_supersample")]
    pub supersample: usize,
    pub seed: u64,
    /// Camera-to-target distance range, metres.
    #[serde(default = "default_distance")]
    pub distance: [f64; 2],
    /// Largest tilt of the target plane, degrees.
    #[serde(default = "default_tilt")]
    pub max_tilt_deg: f64,
}

fn default_supersample() -> usize {
    4
}

fn default_distance() -> [f64; 2] {
    [0.45, 1.1]
}

fn default_tilt() -> f64 {
    45.0
}

impl SceneConfig {
    /// 1200×930 camera with fx = fy = 600, principal point (600, 450), a 4×6 grid.
    pub fn reference(distortion: DistortionModel, n_views: usize, seed: u64) -> Self {
        Self {
            target: TargetSpec {
                rows: 4,
                cols: 6,
                spacing: 0.1,
                radius: 0.035,
                pattern: PatternKind::CircleGrid,
            },
            intrinsics: Intrinsics {
                fx: 600.0,
                fy: 600.0,
                skew: 0.0,
                cx: 600.0,
                cy: 450.0,
            },
            distortion,
            n_views,
            width: 1200,
            height: 930,
            blur_sigma: 0.0,
            supersample: default_supersample(),
            seed,
            distance: default_distance(),
            max_tilt_deg: default_tilt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        if self.target.pattern != PatternKind::CircleGrid {
            return Err(Error::InvalidParameter("only circle-grid targets can be rendered".into()));
        }
        Intrinsics::new(
            self.intrinsics.fx,
            self.intrinsics.fy,
            self.intrinsics.skew,
            self.intrinsics.cx,
            self.intrinsics.cy,
        )?;
        if self.width == 0 || self.height == 0 || self.supersample == 0 {
            return Err(Error::InvalidParameter("image size and supersampling must be positive".into()));
        }
        if !(self.blur_sigma >= 0.0) {
            return Err(Error::InvalidParameter("blur sigma must be non-negative".into()));
        }
        let [near, far] = self.distance;
        if !(near > 0.0 && far >= near) {
            return Err(Error::InvalidParameter("distance range must satisfy 0 < near <= far".into()));
        }
        if !(0.0..90.0).contains(&self.max_tilt_deg) {
            return Err(Error::InvalidParameter("max tilt must lie in [0, 90) degrees".into()));
        }
        Ok(())
    }

    /// Squared normalized radius of the farthest image corner.
    pub fn corner_s_max(&self) -> f64 {
        let k = &self.intrinsics;
        let (w, h) = (self.width as f64, self.height as f64);
        [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(u, v)| {
                let p = k.unproject(&Point2::new(u, v));
                p.x * p.x + p.y * p.y
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub schema_version: u32,
    pub config: SceneConfig,
    /// Poses in their serialized form, so a scene file reproduces them exactly.
    pub poses: Vec<PoseRecord>,
}

impl SyntheticScene {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn circles(&self) -> Vec<TargetCircle> {
        self.config.target.circles()
    }

    pub fn n_views(&self) -> usize {
        self.poses.len()
    }

    /// Pose for `view`, or an error when it does not exist.
    pub fn pose(&self, view: usize) -> Result<PoseSE3> {
        self.poses
            .get(view)
            .map(PoseSE3::from)
            .ok_or_else(|| Error::InvalidParameter(format!("scene has no view {view}")))
    }
}

/// Samples `n_views` poses that keep every circle fully visible and inside
/// the invertible part of the distortion.
pub fn generate_scene(config: &SceneConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let audit = config.distortion.invertibility_audit(config.corner_s_max());
    if !audit.invertible {
        return Err(Error::SceneInfeasible(0));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let circles = config.target.circles();
    let inverse = RadialInverse::new(&config.distortion);
    let [near, far] = config.distance;
    let band = (far - near) / 3.0;
    let mut poses = Vec::with_capacity(config.n_views);
    let mut rejected = 0;
    while poses.len() < config.n_views {
        // cycle through near, mid and far thirds of the distance range
        let tier = poses.len() % 3;
        let z = near + band * (tier as f64 + rng.random::<f64>());
        let record = PoseRecord::from(&sample_pose(&mut rng, z, config.max_tilt_deg.to_radians()));
        if view_is_feasible(config, &circles, &inverse, &PoseSE3::from(&record)) {
            poses.push(record);
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(Error::SceneInfeasible(rejected));
            }
        }
    }
    Ok(SyntheticScene {
        schema_version: SyntheticScene::SCHEMA_VERSION,
        config: config.clone(),
        poses,
    })
}

fn sample_pose(rng: &mut ChaCha8Rng, z: f64, max_tilt: f64) -> PoseSE3 {
    let phi = rng.random_range(0.0..2.0 * PI);
    let tilt = max_tilt * rng.random::<f64>().sqrt();
    let spin = rng.random_range(-PI / 9.0..PI / 9.0);
    let axis = Unit::new_normalize(Vector3::new(phi.cos(), phi.sin(), 0.0));
    let rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), spin) * Rotation3::from_axis_angle(&axis, tilt);
    let u = rng.random_range(-0.35..0.35);
    let v = rng.random_range(-0.25..0.25);
    PoseSE3::new(rotation, Vector3::new(u * z, v * z, z))
}

/// Boundary samples per circle used for visibility checks.
const BOUNDARY_SAMPLES: usize = 64;

fn view_is_feasible(
    config: &SceneConfig,
    circles: &[TargetCircle],
    inverse: &RadialInverse<'_>,
    pose: &PoseSE3,
) -> bool {
    let k = &config.intrinsics;
    let d = &config.distortion;
    let margin = 4.0 + 3.0 * config.blur_sigma;
    let (w, h) = (config.width as f64, config.height as f64);
    // keep circles clear of the fold of the radial map
    let r_limit = inverse.max_distorted_radius();
    for c in circles {
        for i in 0..BOUNDARY_SAMPLES {
            let t = 2.0 * PI * i as f64 / BOUNDARY_SAMPLES as f64;
            let p = Vector3::new(c.center.x + c.radius * t.cos(), c.center.y + c.radius * t.sin(), 0.0);
            let cam = pose.transform(&p);
            if cam.z <= 0.05 {
                return false;
            }
            let pn = Point2::new(cam.x / cam.z, cam.y / cam.z);
            let pd = d.distort(&pn);
            if pd.coords.norm() >= 0.98 * r_limit || d.radial_slope(pn.coords.norm_squared()) <= 0.0 {
                return false;
            }
            let px = k.project(&pd);
            if px.x < margin || px.y < margin || px.x > w - margin || px.y > h - margin {
                return false;
            }
        }
    }
    true
}
