use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("adjacent layers {0} and {1} have equal conductivity")]
    AdjacentEqualConductivity(usize, usize),

    #[error("curve {curve} is under-resolved: quadrature error {error:.3e} with {nodes} nodes")]
    CurveTooCoarse { curve: usize, nodes: usize, error: f64 },

    #[error("linear system is numerically singular (pivot {pivot:.3e}, scale {scale:.3e})")]
    SingularSystem { pivot: f64, scale: f64 },

    #[error("point ({0}, {1}) is not outside the inclusion")]
    PointInsideInclusion(f64, f64),

    #[error("coefficient set {0} is not a harmonic polynomial (laplacian residual {1:.3e})")]
    NonHarmonicCoefficients(usize, f64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("degenerate denominator in Hashin-Shtrikman formula")]
    DegenerateDenominator,

    #[error("multipole fit is ill-conditioned (condition number {0:.3e})")]
    IllConditionedFit(f64),

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("fitted dipole moment vanishes; background gradient lies in the tensor kernel")]
    DegenerateDipole,

    #[error("multipole spectrum exhausted after {found} of {requested} layers")]
    PeelExhausted { found: usize, requested: usize },

    #[error("non-physical estimate: {0}")]
    NonPhysicalEstimate(String),

    #[error("no order combination passed the L/R certificate (tried {0})")]
    CertificateFailed(usize),

    #[error("Newton iteration diverged: {0}")]
    NewtonDiverged(String),

    #[error("measurement surface intersects the inclusion: {0}")]
    GeometryConflict(String),

    #[error("invalid measurement set: {0}")]
    InvalidMeasurement(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}
