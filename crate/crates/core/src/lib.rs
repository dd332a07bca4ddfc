//! Circle-grid camera calibration with an unbiased centroid estimator.
//!
//! The image of a circle under perspective projection and polynomial radial
//! distortion is no longer a conic, so neither the projected centre nor the
//! centre of the projected ellipse coincides with the centroid that a blob
//! detector measures. This crate computes that centroid in closed form from
//! moments of the normalized-plane ellipse, and builds a complete synthetic
//! calibration pipeline around it.

pub mod calibration;
pub mod camera;
pub mod conic;
pub mod distortion;
pub mod error;
pub mod estimators;
pub mod io;
pub mod moments;
pub mod par;
pub mod pose_eval;
pub mod quadrature;
pub mod synthetic;

pub use camera::{Intrinsics, PoseSE3, TargetCircle};
pub use conic::{ConicMatrix, EllipseGeometry, Homography};
pub use distortion::DistortionModel;
pub use error::{Error, Result};
pub use estimators::{Estimator, Projector};
pub use par::Execution;
