use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Estimator, Projector, ORACLE_SAMPLES};
use crate::par::Execution;

use super::image::GrayImage;
use super::scene::SyntheticScene;

/// Pixels darker than this belong to a blob.
pub const THRESHOLD: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub view_id: usize,
    pub point_id: usize,
    pub u: f64,
    pub v: f64,
    /// Zero for measurements that did not come from an image.
    pub pixel_count: usize,
}

impl Measurement {
    pub fn point(&self) -> Point2<f64> {
        Point2::new(self.u, self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Uniform,
    /// Weight `255 − intensity`.
    Intensity,
}

/// Blob extracted from a thresholded image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub centroid: Point2<f64>,
    pub pixel_count: usize,
}

/// 8-connected components of dark pixels with their weighted centroids,
/// in pixel coordinates where pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.
///
/// In intensity mode the one-pixel ring around each component is weighted
/// too, so partially covered edge pixels below the threshold still count.
pub fn find_blobs(image: &GrayImage, mode: WeightMode) -> Vec<Blob> {
    let (w, h) = (image.width, image.height);
    let mut seen = vec![false; w * h];
    let mut ring = vec![usize::MAX; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || image.data[start] >= THRESHOLD {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut sw, mut sx, mut sy, mut count) = (0.0, 0.0, 0.0, 0usize);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let wt = match mode {
                WeightMode::Uniform => 1.0,
                WeightMode::Intensity => 255.0 - image.data[i] as f64,
            };
            sw += wt;
            sx += wt * (x as f64 + 0.5);
            sy += wt * (y as f64 + 0.5);
            count += 1;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if image.data[j] < THRESHOLD {
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    } else if mode == WeightMode::Intensity && ring[j] != start {
                        ring[j] = start;
                        let wt = 255.0 - image.data[j] as f64;
                        sw += wt;
                        sx += wt * (nx as f64 + 0.5);
                        sy += wt * (ny as f64 + 0.5);
                    }
                }
            }
        }
        blobs.push(Blob {
            centroid: Point2::new(sx / sw, sy / sw),
            pixel_count: count,
        });
    }
    blobs
}

/// Measures every circle of `view`, associating blobs with grid ids through
/// the ground-truth unbiased predictions.
pub fn measure_centroids(
    image: &GrayImage,
    scene: &SyntheticScene,
    view: usize,
    mode: WeightMode,
) -> Result<Vec<Measurement>> {
    let expected = scene.config.target.len();
    let blobs = find_blobs(image, mode);
    let mismatch = |found| Error::DetectionCountMismatch { view, found, expected };
    if blobs.len() != expected {
        return Err(mismatch(blobs.len()));
    }
    let predicted = predict_view(scene, view, Estimator::Unbiased, Execution::Sequential)?;
    let mut taken = vec![false; expected];
    let mut out = Vec::with_capacity(expected);
    for blob in &blobs {
        let (id, _) = predicted
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - blob.centroid).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("target is non-empty");
        if taken[id] {
            return Err(mismatch(blobs.len()));
        }
        taken[id] = true;
        out.push(Measurement {
            view_id: view,
            point_id: id,
            u: blob.centroid.x,
            v: blob.centroid.y,
            pixel_count: blob.pixel_count,
        });
    }
    out.sort_by_key(|m| m.point_id);
    Ok(out)
}

/// Model predictions for every circle of `view`, in point-id order.
pub fn predict_view(
    scene: &SyntheticScene,
    view: usize,
    estimator: Estimator,
    exec: Execution,
) -> Result<Vec<Point2<f64>>> {
    let cfg = &scene.config;
    let projector = Projector::new(cfg.intrinsics, cfg.distortion.clone());
    let h = scene.pose(view)?.plane_homography()?;
    exec.map(&scene.circles(), |c| projector.estimate(estimator, c, &h))
        .into_iter()
        .collect()
}

/// Exact distorted centroids from dense quadrature, bypassing the renderer.
pub fn oracle_measurements(scene: &SyntheticScene, view: usize, exec: Execution) -> Result<Vec<Measurement>> {
    oracle_measurements_with(scene, view, ORACLE_SAMPLES, exec)
}

/// As [`oracle_measurements`] with a chosen quadrature sample count.
pub fn oracle_measurements_with(
    scene: &SyntheticScene,
    view: usize,
    samples: usize,
    exec: Execution,
) -> Result<Vec<Measurement>> {
    let points = predict_view(scene, view, Estimator::Numerical(samples), exec)?;
    Ok(points
        .into_iter()
        .enumerate()
        .map(|(point_id, p)| Measurement {
            view_id: view,
            point_id,
            u: p.x,
            v: p.y,
            pixel_count: 0,
        })
        .collect())
}
