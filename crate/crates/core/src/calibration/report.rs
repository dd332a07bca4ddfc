use serde::{Deserialize, Serialize};

use super::{CalibrationProblem, CalibrationResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewStats {
    pub view_id: usize,
    /// Camera-to-target-origin distance, metres.
    pub distance: f64,
    pub mean_error: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub label: String,
    pub views: usize,
    pub min_distance: f64,
    pub max_distance: f64,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionReport {
    pub views: Vec<ViewStats>,
    /// Near, mid and far terciles by distance.
    pub buckets: Vec<BucketStats>,
}

impl ReprojectionReport {
    /// Largest over smallest bucket mean; 1 when all are zero.
    pub fn bucket_ratio(&self) -> f64 {
        let means = self.buckets.iter().filter(|b| b.views > 0).map(|b| b.mean_error);
        let (lo, hi) = means.fold((f64::INFINITY, 0.0_f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
        if hi == 0.0 {
            1.0
        } else {
            hi / lo
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("view_id,distance,mean_error,max_error\n");
        for v in &self.views {
            s.push_str(&format!("{},{},{},{}\n", v.view_id, v.distance, v.mean_error, v.max_error));
        }
        s
    }
}

pub fn reprojection_report(result: &CalibrationResult, problem: &CalibrationProblem) -> ReprojectionReport {
    let mut views = Vec::with_capacity(problem.views.len());
    let mut it = result.residuals.iter();
    for (v, pose) in problem.views.iter().zip(&result.poses) {
        let errs: Vec<f64> = it
            .by_ref()
            .take(v.points.len())
            .map(|r| r.du.hypot(r.dv))
            .collect();
        let n = errs.len().max(1) as f64;
        views.push(ViewStats {
            view_id: v.view_id,
            distance: pose.translation.norm(),
            mean_error: errs.iter().sum::<f64>() / n,
            max_error: errs.iter().copied().fold(0.0, f64::max),
        });
    }
    let mut order: Vec<usize> = (0..views.len()).collect();
    order.sort_by(|&a, &b| views[a].distance.total_cmp(&views[b].distance));
    let n = order.len();
    let buckets = ["near", "mid", "far"]
        .iter()
        .enumerate()
        .map(|(k, &label)| {
            let idx = &order[k * n / 3..(k + 1) * n / 3];
            let m = idx.len().max(1) as f64;
            BucketStats {
                label: label.to_string(),
                views: idx.len(),
                min_distance: idx.iter().map(|&i| views[i].distance).fold(f64::INFINITY, f64::min),
                max_distance: idx.iter().map(|&i| views[i].distance).fold(0.0, f64::max),
                mean_error: idx.iter().map(|&i| views[i].mean_error).sum::<f64>() / m,
            }
        })
        .collect();
    ReprojectionReport { views, buckets }
}
