use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("circle radius must be positive, got {0}")]
    NonPositiveRadius(f64),

    #[error("homography is singular (|det| = {0:e})")]
    SingularHomography(f64),

    #[error("conic is not a non-degenerate real ellipse: {0}")]
    DegenerateConic(&'static str),

    #[error("moment order {order} exceeds table capacity {max}")]
    OrderOverflow { order: usize, max: usize },

    #[error("distortion model must have between 0 and {max} coefficients beyond d0, got {got}")]
    InvalidDistortion { got: usize, max: usize },

    #[error("undistortion did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("distortion is not invertible for distorted radius {0}")]
    NonInvertibleInRange(f64),

    #[error("target plane passes through the camera centre (|det| = {0:e})")]
    DegenerateViewpoint(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no feasible scene after {0} rejected pose samples")]
    SceneInfeasible(usize),

    #[error("view {view}: detected {found} blobs, expected {expected}")]
    DetectionCountMismatch {
        view: usize,
        found: usize,
        expected: usize,
    },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),

    #[error("image of the absolute conic is not positive definite")]
    NonPositiveDefinite,

    #[error("target lies behind the camera")]
    BehindCamera,

    #[error("solver produced non-finite values at iteration {0}")]
    DivergedNonFinite(usize),

    #[error("insufficient rotational motion between pose pairs")]
    InsufficientMotion,

    #[error("translation system is ill-conditioned")]
    IllConditioned,

    #[error("I/O error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
