use thiserror::Error;

/// Errors raised by the phase, torus and flow layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spectrum outside the calibrated strip: |theta - theta_hat| = {distance} (margin {margin})")]
    OutOfCalibratedRange { distance: f64, margin: f64 },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("phase {theta} sits on a pole of tan((n-1)pi/2 - theta)")]
    TangentPole { theta: f64 },

    #[error("eigenvalue {index} vanishes; the minor formula excludes this case")]
    ZeroEigenvalue { index: usize },

    #[error("theta_hat = {theta_hat} is not in the top branch ((n-1)pi/2, n pi/2) for n = {n}")]
    InvalidBranch { theta_hat: f64, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("the invariant Z vanishes (|Z| = {modulus})")]
    ZeroInvariant { modulus: f64 },

    #[error("no 2pi-translate of arg Z = {arg} lies in branch {branch}")]
    BranchUnavailable { arg: f64, branch: i64 },

    #[error("grid point {point} left the calibrated strip (margin {margin}); retry with dt <= {suggested_dt}")]
    LeftCalibratedRange {
        point: usize,
        margin: f64,
        suggested_dt: f64,
    },

    #[error("initial potential is not almost calibrated at {} grid point(s)", points.len())]
    NotAlmostCalibrated { points: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
