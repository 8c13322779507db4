use thiserror::Error;

use crate::point::Mouth;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("zero-length vector")]
    ZeroVector,
    #[error("fiber coordinate {0} outside [0, 1]")]
    FiberOutOfRange(f64),
    #[error("point ({}, {}, {}) lies inside a removed ball", .0[0], .0[1], .0[2])]
    InsideBall([f64; 3]),
    #[error("point is not on sphere {0} (distance {1} from its center)")]
    NotOnSphere(Mouth, f64),
    #[error("wrong chart: {0}")]
    WrongChart(&'static str),
    #[error("non-finite ray state: {0}")]
    NonFinite(String),
    #[error("no real root for the normal momentum (discriminant {0})")]
    NoRealRoot(f64),
    #[error("state is not on a gluing interface or is not heading across it")]
    NotAtInterface,
    #[error("boundary parameter {0} out of range")]
    BoundaryParam(f64),
    #[error("point ({0}, {1}) is outside the meridian domain")]
    OutsideDomain(f64, f64),
    #[error("point lies on the excluded curve")]
    OnCurve,
    #[error("handle point at the north pole maps onto the wall")]
    NorthPole,
    #[error("point is inside the obstacle or on its surface")]
    InsideObstacle,
    #[error("point within {0:e} of the obstacle surface")]
    NearSigma(f64),
    #[error("evaluation on a seam of the piecewise map")]
    OnSeam,
    #[error("Newton iteration did not converge (residual {0:e})")]
    NoConvergence(f64),
    #[error("nonpositive Jacobian determinant {0}")]
    NonPositiveDeterminant(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("pixel ({x}, {y}): {source}")]
    Pixel {
        x: usize,
        y: usize,
        source: Box<Error>,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
