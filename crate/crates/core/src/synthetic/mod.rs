//! Synthetic circle-grid scenes: pose sampling, rasterization and blob
//! measurement.

pub mod image;
pub mod measure;
pub mod render;
pub mod scene;
pub mod sweep;

pub use image::{gaussian_blur, GrayImage};
pub use measure::{
    find_blobs, measure_centroids, oracle_measurements, oracle_measurements_with, predict_view, Blob,
    Measurement, WeightMode, THRESHOLD,
};
pub use render::{render_coverage, render_view};
pub use scene::{generate_scene, PatternKind, SceneConfig, SyntheticScene, TargetSpec};
pub use sweep::{run_sweep, sweep_poses, sweep_to_csv, SweepConfig, SweepRow, SWEEP_HEADER};
