//! Two-stage calibration: closed-form initialization without distortion,
//! then joint Levenberg–Marquardt refinement through a chosen estimator.

mod homography;
mod lm;
mod report;
mod zhang;

use std::collections::BTreeMap;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, PoseSE3, TargetCircle};
use crate::distortion::DistortionModel;
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::par::Execution;
use crate::synthetic::Measurement;

pub use homography::estimate_homography;
pub use lm::{refine, residual_jacobian, ParameterLayout};
pub use report::{reprojection_report, BucketStats, ReprojectionReport, ViewStats};
pub use zhang::{init_extrinsics, zhang_init};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    pub estimator: Estimator,
    /// Number of radial coefficients `d₁..d_{n_d}` to estimate.
    pub n_distortion: usize,
    pub estimate_skew: bool,
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub cost_tolerance: f64,
    /// Stop when `‖Jᵀr‖∞` falls below this.
    pub gradient_tolerance: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            estimator: Estimator::Unbiased,
            n_distortion: 2,
            estimate_skew: false,
            max_iterations: 100,
            cost_tolerance: 1e-12,
            gradient_tolerance: 1e-10,
            execution: Execution::default(),
        }
    }
}

/// Observed centroids of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewObservations {
    pub view_id: usize,
    /// `(point id, pixel position)`, point ids unique.
    pub points: Vec<(usize, Point2<f64>)>,
}

#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    pub circles: Vec<TargetCircle>,
    pub views: Vec<ViewObservations>,
    pub options: CalibrationOptions,
}

impl CalibrationProblem {
    pub fn new(circles: Vec<TargetCircle>, views: Vec<ViewObservations>, options: CalibrationOptions) -> Result<Self> {
        let p = Self {
            circles,
            views,
            options,
        };
        p.validate()?;
        Ok(p)
    }

    /// Groups measurements by view, in ascending view id.
    pub fn from_measurements(
        circles: Vec<TargetCircle>,
        measurements: &[Measurement],
        options: CalibrationOptions,
    ) -> Result<Self> {
        let mut by_view: BTreeMap<usize, Vec<(usize, Point2<f64>)>> = BTreeMap::new();
        for m in measurements {
            by_view.entry(m.view_id).or_default().push((m.point_id, m.point()));
        }
        let views = by_view
            .into_iter()
            .map(|(view_id, mut points)| {
                points.sort_by_key(|p| p.0);
                ViewObservations { view_id, points }
            })
            .collect();
        Self::new(circles, views, options)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.len() < 3 {
            return Err(Error::InvalidParameter(format!(
                "calibration needs at least 3 views, got {}",
                self.views.len()
            )));
        }
        if self.options.n_distortion > crate::moments::MAX_DISTORTION_ORDER {
            return Err(Error::InvalidDistortion {
                got: self.options.n_distortion,
                max: crate::moments::MAX_DISTORTION_ORDER,
            });
        }
        for v in &self.views {
            if v.points.len() < 4 {
                return Err(Error::InvalidParameter(format!(
                    "view {} has {} points, need at least 4",
                    v.view_id,
                    v.points.len()
                )));
            }
            let mut seen = vec![false; self.circles.len()];
            for &(id, p) in &v.points {
                if id >= self.circles.len() {
                    return Err(Error::InvalidParameter(format!(
                        "view {} refers to point {id}, target has {}",
                        v.view_id,
                        self.circles.len()
                    )));
                }
                if std::mem::replace(&mut seen[id], true) {
                    return Err(Error::InvalidParameter(format!(
                        "view {} lists point {id} twice",
                        v.view_id
                    )));
                }
                if !(p.x.is_finite() && p.y.is_finite()) {
                    return Err(Error::InvalidParameter(format!("view {} has a non-finite point", v.view_id)));
                }
            }
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.views.iter().map(|v| v.points.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    CostConverged,
    GradientConverged,
    /// No damping level produced a decrease.
    StepRejected,
    MaxIterations,
}

/// Per-point reprojection residual, measured minus predicted.
pub use crate::io::Residual;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub intrinsics: Intrinsics,
    pub distortion: DistortionModel,
    pub poses: Vec<PoseSE3>,
    pub view_ids: Vec<usize>,
    /// Per-coordinate RMS: `rms² · 2N = final_cost` for `N` points.
    pub rms: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Cost after each accepted step, starting with the seed.
    pub cost_history: Vec<f64>,
    pub residuals: Vec<Residual>,
}

/// Initial intrinsics and poses from per-view homographies, distortion ignored.
pub fn initialize(problem: &CalibrationProblem) -> Result<(Intrinsics, Vec<PoseSE3>)> {
    let homographies = problem
        .views
        .iter()
        .map(|v| {
            let (pw, pi): (Vec<_>, Vec<_>) = v
                .points
                .iter()
                .map(|&(id, p)| (problem.circles[id].center, p))
                .unzip();
            estimate_homography(&pw, &pi)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = zhang_init(&homographies, problem.options.estimate_skew)?;
    let poses = homographies
        .iter()
        .map(|h| init_extrinsics(h, &k))
        .collect::<Result<Vec<_>>>()?;
    Ok((k, poses))
}

/// Closed-form initialization followed by refinement.
pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    let (k, poses) = initialize(problem)?;
    refine(problem, &k, &poses)
}
