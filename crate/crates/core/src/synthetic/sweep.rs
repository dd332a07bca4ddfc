use std::f64::consts::PI;

use nalgebra::{Point2, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, PoseSE3, TargetCircle};
use crate::distortion::DistortionModel;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, Projector, ORACLE_SAMPLES};
use crate::par::Execution;

/// Estimator error against the dense oracle over a fixed set of scenes,
/// for a grid of circle radii and first distortion coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub radii: Vec<f64>,
    pub d1: Vec<f64>,
    pub n_scenes: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub oracle_samples: usize,
    pub intrinsics: Intrinsics,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            radii: (1..=10).map(|i| 0.01 * i as f64).collect(),
            d1: (0..=6).map(|i| -0.4 + 0.1 * i as f64).collect(),
            n_scenes: 24,
            seed: 0,
            estimators: vec![
                Estimator::Unbiased,
                Estimator::PointBased,
                Estimator::ConicBased,
                Estimator::Numerical(1600),
            ],
            oracle_samples: ORACLE_SAMPLES,
            intrinsics: Intrinsics::new(600.0, 600.0, 0.0, 600.0, 450.0).expect("valid intrinsics"),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scenes == 0 || self.radii.is_empty() || self.d1.is_empty() || self.estimators.is_empty() {
            return Err(Error::InvalidParameter("empty sweep grid".into()));
        }
        if let Some(r) = self.radii.iter().find(|r| !(**r > 0.0 && **r <= MAX_RADIUS)) {
            return Err(Error::InvalidParameter(format!("sweep radius {r} outside (0, {MAX_RADIUS}]")));
        }
        if let Some(d) = self.d1.iter().find(|d| !(**d >= -0.4 && **d <= 0.4)) {
            return Err(Error::InvalidParameter(format!("sweep d1 {d} outside [-0.4, 0.4]")));
        }
        if self.oracle_samples < 4 {
            return Err(Error::InvalidParameter("oracle needs at least 4 samples".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    pub d1: f64,
    pub estimator: Estimator,
    /// Statistics of the pixel distance to the oracle over the scenes.
    pub mean_error: f64,
    pub std_error: f64,
    pub max_error: f64,
}

const MAX_RADIUS: f64 = 0.1;

/// Target-plane poses of the sweep scenes: a single circle at the target
/// origin, 0.45–1.1 m away, tilted up to 45°, kept well inside the field
/// of view for every radius up to 0.1 m.
pub fn sweep_poses(n: usize, seed: u64) -> Vec<PoseSE3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let z = 0.45 + 0.65 * (i % 3) as f64 / 3.0 + rng.random_range(0.0..0.65 / 3.0);
            let phi = rng.random_range(0.0..2.0 * PI);
            let tilt = 45f64.to_radians() * rng.random::<f64>().sqrt();
            let axis = Unit::new_normalize(Vector3::new(phi.cos(), phi.sin(), 0.0));
            let u = rng.random_range(-0.3..0.3);
            let v = rng.random_range(-0.25..0.25);
            PoseSE3::new(Rotation3::from_axis_angle(&axis, tilt), Vector3::new(u * z, v * z, z))
        })
        .collect()
}

pub fn run_sweep(config: &SweepConfig, exec: Execution) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let poses = sweep_poses(config.n_scenes, config.seed);
    let homographies = poses.iter().map(|p| p.plane_homography()).collect::<Result<Vec<_>>>()?;
    let cells: Vec<(f64, f64, usize)> = config
        .radii
        .iter()
        .flat_map(|&r| config.d1.iter().flat_map(move |&d| (0..config.n_scenes).map(move |s| (r, d, s))))
        .collect();

    // per (radius, d1, scene): the error of every estimator
    let errors = exec.map(&cells, |&(r, d1, s)| -> Result<Vec<f64>> {
        let circle = TargetCircle::new(Point2::origin(), r)?;
        let projector = Projector::new(config.intrinsics, DistortionModel::new(&[d1])?);
        let h = &homographies[s];
        let truth = projector.estimate(Estimator::Numerical(config.oracle_samples), &circle, h)?;
        config
            .estimators
            .iter()
            .map(|&e| Ok((projector.estimate(e, &circle, h)? - truth).norm()))
            .collect()
    });
    let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (g, chunk) in errors.chunks(config.n_scenes).enumerate() {
        let (r, d1, _) = cells[g * config.n_scenes];
        for (k, &estimator) in config.estimators.iter().enumerate() {
            let e: Vec<f64> = chunk.iter().map(|v| v[k]).collect();
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            rows.push(SweepRow {
                radius: r,
                d1,
                estimator,
                mean_error: mean,
                std_error: var.sqrt(),
                max_error: e.iter().copied().fold(0.0, f64::max),
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "radius,d1,estimator,mean_error,std_error,max_error";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.6e},{:.6e},{:.6e}\n",
            r.radius, r.d1, r.estimator, r.mean_error, r.std_error, r.max_error
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poses_keep_circles_in_view() {
        let k = SweepConfig::default().intrinsics;
        for p in sweep_poses(24, 0) {
            for i in 0..32 {
                let t = 2.0 * PI * i as f64 / 32.0;
                let c = p.transform(&Vector3::new(MAX_RADIUS * t.cos(), MAX_RADIUS * t.sin(), 0.0));
                assert!(c.z > 0.2);
                let pn = Point2::new(c.x / c.z, c.y / c.z);
                // strong barrel distortion stays monotone here
                assert!(1.0 - 1.2 * pn.coords.norm_squared() > 0.0);
                let px = k.project(&pn);
                assert!(px.x > 0.0 && px.x < 1200.0 && px.y > 0.0 && px.y < 930.0);
            }
        }
    }

    #[test]
    fn small_sweep() {
        let cfg = SweepConfig {
            radii: vec![0.05],
            d1: vec![-0.2],
            n_scenes: 3,
            oracle_samples: 128 * 128,
            ..Default::default()
        };
        let rows = run_sweep(&cfg, Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].max_error < 1e-8);
        assert!(rows[1].mean_error > rows[0].mean_error);
        let csv = sweep_to_csv(&rows);
        assert!(csv.starts_with(SWEEP_HEADER));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn rejects_bad_grid() {
        let cfg = SweepConfig { radii: vec![0.2], ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
