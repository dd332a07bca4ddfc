use nalgebra::{DMatrix, DVector, Vector3};

use crate::camera::{Intrinsics, PoseSE3};
use crate::distortion::DistortionModel;
use crate::error::{Error, Result};
use crate::estimators::Projector;

use super::{CalibrationProblem, CalibrationResult, Residual, Termination};

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;
const VIEW_PARAMS: usize = 6;

/// Parameter vector `[fx, fy, (skew), cx, cy, d₁..d_{n_d}, (ω, t) per view]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterLayout {
    pub skew: bool,
    pub n_distortion: usize,
    pub n_views: usize,
}

impl ParameterLayout {
    pub fn for_problem(p: &CalibrationProblem) -> Self {
        Self {
            skew: p.options.estimate_skew,
            n_distortion: p.options.n_distortion,
            n_views: p.views.len(),
        }
    }

    pub fn n_global(&self) -> usize {
        4 + usize::from(self.skew) + self.n_distortion
    }

    pub fn len(&self) -> usize {
        self.n_global() + VIEW_PARAMS * self.n_views
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn view_offset(&self, view: usize) -> usize {
        self.n_global() + VIEW_PARAMS * view
    }

    pub fn pack(&self, k: &Intrinsics, d: &DistortionModel, poses: &[PoseSE3]) -> DVector<f64> {
        let mut theta = Vec::with_capacity(self.len());
        theta.extend([k.fx, k.fy]);
        if self.skew {
            theta.push(k.skew);
        }
        theta.extend([k.cx, k.cy]);
        let higher = d.higher();
        theta.extend((0..self.n_distortion).map(|i| higher.get(i).copied().unwrap_or(0.0)));
        for p in poses {
            theta.extend(p.axis_angle().iter());
            theta.extend(p.translation.iter());
        }
        DVector::from_vec(theta)
    }

    pub fn intrinsics(&self, theta: &DVector<f64>) -> Result<Intrinsics> {
        let (skew, o) = if self.skew { (theta[2], 3) } else { (0.0, 2) };
        Intrinsics::new(theta[0], theta[1], skew, theta[o], theta[o + 1])
    }

    pub fn distortion(&self, theta: &DVector<f64>) -> Result<DistortionModel> {
        let o = self.n_global() - self.n_distortion;
        DistortionModel::new(&theta.as_slice()[o..o + self.n_distortion])
    }

    pub fn pose(&self, theta: &DVector<f64>, view: usize) -> PoseSE3 {
        let o = self.view_offset(view);
        PoseSE3::from_axis_angle(
            Vector3::new(theta[o], theta[o + 1], theta[o + 2]),
            Vector3::new(theta[o + 3], theta[o + 4], theta[o + 5]),
        )
    }
}

/// Residual rows of each view inside the stacked vector.
fn row_offsets(problem: &CalibrationProblem) -> Vec<usize> {
    let mut offs = Vec::with_capacity(problem.views.len() + 1);
    let mut acc = 0;
    offs.push(0);
    for v in &problem.views {
        acc += 2 * v.points.len();
        offs.push(acc);
    }
    offs
}

/// Predicted minus observed, `(u, v)` interleaved, for one view.
fn view_residuals(
    problem: &CalibrationProblem,
    projector: &Projector,
    pose: &PoseSE3,
    view: usize,
    out: &mut [f64],
) -> Result<()> {
    let h = pose.plane_homography()?;
    let est = problem.options.estimator;
    for (k, &(id, obs)) in problem.views[view].points.iter().enumerate() {
        let p = projector.estimate(est, &problem.circles[id], &h)?;
        out[2 * k] = p.x - obs.x;
        out[2 * k + 1] = p.y - obs.y;
    }
    Ok(())
}

fn projector(layout: &ParameterLayout, theta: &DVector<f64>) -> Result<Projector> {
    Ok(Projector::new(layout.intrinsics(theta)?, layout.distortion(theta)?))
}

fn all_residuals(problem: &CalibrationProblem, layout: &ParameterLayout, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let offs = row_offsets(problem);
    let proj = projector(layout, theta)?;
    let exec = problem.options.execution;
    let blocks = exec.map_range(problem.views.len(), |v| {
        let mut out = vec![0.0; offs[v + 1] - offs[v]];
        view_residuals(problem, &proj, &layout.pose(theta, v), v, &mut out).map(|_| out)
    });
    let mut r = DVector::zeros(offs[problem.views.len()]);
    for (v, b) in blocks.into_iter().enumerate() {
        r.rows_mut(offs[v], offs[v + 1] - offs[v]).copy_from_slice(&b?);
    }
    Ok(r)
}

fn fd_step(x: f64, scale: f64) -> f64 {
    scale * 1e-6_f64.max(1e-6 * x.abs())
}

/// Jacobian split into the dense global block and one block per view.
struct BlockJacobian {
    global: DMatrix<f64>,
    views: Vec<DMatrix<f64>>,
}

fn block_jacobian(
    problem: &CalibrationProblem,
    layout: &ParameterLayout,
    theta: &DVector<f64>,
    step_scale: f64,
) -> Result<BlockJacobian> {
    let offs = row_offsets(problem);
    let n_rows = offs[problem.views.len()];
    let ng = layout.n_global();
    let nv = problem.views.len();
    let base = projector(layout, theta)?;
    let exec = problem.options.execution;

    // one task per parameter column
    let columns = exec.map_range(ng + VIEW_PARAMS * nv, |c| -> Result<Vec<f64>> {
        let h = fd_step(theta[c], step_scale);
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[c] += h;
        minus[c] -= h;
        if c < ng {
            let (pp, pm) = (projector(layout, &plus)?, projector(layout, &minus)?);
            let mut col = vec![0.0; n_rows];
            let mut tmp = vec![0.0; n_rows];
            for v in 0..nv {
                let pose = layout.pose(theta, v);
                let rows = offs[v]..offs[v + 1];
                view_residuals(problem, &pp, &pose, v, &mut col[rows.clone()])?;
                view_residuals(problem, &pm, &pose, v, &mut tmp[rows])?;
            }
            for (a, b) in col.iter_mut().zip(&tmp) {
                *a = (*a - b) / (2.0 * h);
            }
            Ok(col)
        } else {
            let v = (c - ng) / VIEW_PARAMS;
            let len = offs[v + 1] - offs[v];
            let mut col = vec![0.0; len];
            let mut tmp = vec![0.0; len];
            view_residuals(problem, &base, &layout.pose(&plus, v), v, &mut col)?;
            view_residuals(problem, &base, &layout.pose(&minus, v), v, &mut tmp)?;
            for (a, b) in col.iter_mut().zip(&tmp) {
                *a = (*a - b) / (2.0 * h);
            }
            Ok(col)
        }
    });

    let mut global = DMatrix::zeros(n_rows, ng);
    let mut views: Vec<DMatrix<f64>> = (0..nv)
        .map(|v| DMatrix::zeros(offs[v + 1] - offs[v], VIEW_PARAMS))
        .collect();
    for (c, col) in columns.into_iter().enumerate() {
        let col = col?;
        if col.iter().any(|x| !x.is_finite()) {
            return Err(Error::DivergedNonFinite(0));
        }
        if c < ng {
            global.column_mut(c).copy_from_slice(&col);
        } else {
            let v = (c - ng) / VIEW_PARAMS;
            views[v].column_mut((c - ng) % VIEW_PARAMS).copy_from_slice(&col);
        }
    }
    Ok(BlockJacobian { global, views })
}

/// Dense finite-difference Jacobian of the stacked residuals; `step_scale`
/// multiplies the default step.
pub fn residual_jacobian(problem: &CalibrationProblem, theta: &DVector<f64>, step_scale: f64) -> Result<DMatrix<f64>> {
    let layout = ParameterLayout::for_problem(problem);
    let offs = row_offsets(problem);
    let bj = block_jacobian(problem, &layout, theta, step_scale)?;
    let ng = layout.n_global();
    let mut j = DMatrix::zeros(bj.global.nrows(), layout.len());
    j.columns_mut(0, ng).copy_from(&bj.global);
    for (v, b) in bj.views.iter().enumerate() {
        j.view_mut((offs[v], layout.view_offset(v)), (b.nrows(), VIEW_PARAMS))
            .copy_from(b);
    }
    Ok(j)
}

/// `JᵀJ` and `Jᵀr` from the block structure.
fn normal_equations(
    problem: &CalibrationProblem,
    layout: &ParameterLayout,
    bj: &BlockJacobian,
    r: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let offs = row_offsets(problem);
    let n = layout.len();
    let ng = layout.n_global();
    let mut a = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    a.view_mut((0, 0), (ng, ng)).copy_from(&(bj.global.transpose() * &bj.global));
    g.rows_mut(0, ng).copy_from(&(bj.global.transpose() * r));
    for (v, jv) in bj.views.iter().enumerate() {
        let rows = offs[v + 1] - offs[v];
        let o = layout.view_offset(v);
        let jg = bj.global.rows(offs[v], rows);
        let gv = jg.transpose() * jv;
        a.view_mut((0, o), (ng, VIEW_PARAMS)).copy_from(&gv);
        a.view_mut((o, 0), (VIEW_PARAMS, ng)).copy_from(&gv.transpose());
        a.view_mut((o, o), (VIEW_PARAMS, VIEW_PARAMS))
            .copy_from(&(jv.transpose() * jv));
        g.rows_mut(o, VIEW_PARAMS)
            .copy_from(&(jv.transpose() * r.rows(offs[v], rows)));
    }
    (a, g)
}

/// Levenberg–Marquardt refinement from `seed_k`, `seed_poses` and zero distortion.
pub fn refine(problem: &CalibrationProblem, seed_k: &Intrinsics, seed_poses: &[PoseSE3]) -> Result<CalibrationResult> {
    problem.validate()?;
    if seed_poses.len() != problem.views.len() {
        return Err(Error::InvalidParameter(format!(
            "{} seed poses for {} views",
            seed_poses.len(),
            problem.views.len()
        )));
    }
    let opts = &problem.options;
    let layout = ParameterLayout::for_problem(problem);
    let mut theta = layout.pack(seed_k, &DistortionModel::identity(), seed_poses);
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::DivergedNonFinite(0));
    }
    let mut r = all_residuals(problem, &layout, &theta)?;
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::DivergedNonFinite(0));
    }
    let mut history = vec![cost];
    let mut lambda = LAMBDA_INIT;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let bj = block_jacobian(problem, &layout, &theta, 1.0).map_err(|e| match e {
            Error::DivergedNonFinite(_) => Error::DivergedNonFinite(iterations),
            e => e,
        })?;
        let (a, g) = normal_equations(problem, &layout, &bj, &r);
        if g.amax() < opts.gradient_tolerance {
            termination = Termination::GradientConverged;
            break;
        }
        let diag_floor = 1e-12 * a.diagonal().amax().max(f64::MIN_POSITIVE);
        loop {
            let mut damped = a.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * a[(i, i)].max(diag_floor);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&g)));
            let accepted = step.and_then(|delta| {
                let cand = &theta + delta;
                let rc = all_residuals(problem, &layout, &cand).ok()?;
                let cc = rc.norm_squared();
                (cc.is_finite() && cc < cost).then_some((cand, rc, cc))
            });
            match accepted {
                Some((cand, rc, cc)) => {
                    let rel = (cost - cc) / cost;
                    theta = cand;
                    r = rc;
                    cost = cc;
                    history.push(cost);
                    lambda = (lambda / 10.0).max(1e-15);
                    if rel < opts.cost_tolerance || cost == 0.0 {
                        termination = Termination::CostConverged;
                        break 'outer;
                    }
                    break;
                }
                None => {
                    lambda *= 10.0;
                    if lambda > LAMBDA_MAX {
                        termination = Termination::StepRejected;
                        break 'outer;
                    }
                }
            }
        }
    }

    let k = layout.intrinsics(&theta)?;
    let d = layout.distortion(&theta)?;
    let poses: Vec<_> = (0..problem.views.len()).map(|v| layout.pose(&theta, v)).collect();
    let mut residuals = Vec::with_capacity(problem.n_points());
    let mut idx = 0;
    for v in &problem.views {
        for &(id, _) in &v.points {
            residuals.push(Residual {
                view_id: v.view_id,
                point_id: id,
                du: -r[idx],
                dv: -r[idx + 1],
            });
            idx += 2;
        }
    }
    let n_points = problem.n_points();
    Ok(CalibrationResult {
        intrinsics: k,
        distortion: d,
        poses,
        view_ids: problem.views.iter().map(|v| v.view_id).collect(),
        rms: (cost / (2 * n_points) as f64).sqrt(),
        final_cost: cost,
        iterations,
        termination,
        cost_history: history,
        residuals,
    })
}
