use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least 3 rays, got {0}")]
    TooFewRays(usize),
    #[error("ray ({0}, {1}) is not primitive")]
    NonPrimitiveRay(i64, i64),
    #[error("rays are not in strictly counterclockwise order around the origin")]
    NotCounterClockwise,
    #[error("rays do not positively span the plane")]
    NotSpanning,
    #[error("dual polygon is not reflexive: vertex between rays {0} and {1} is not integral")]
    NonReflexive(usize, usize),
    #[error("ray {0} does not support a facet of the dual polygon")]
    RedundantRay(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sample cloud fails the volume certificate: defect {defect:.3e} > tolerance {tolerance:.3e}")]
    CloudInadequate { defect: f64, tolerance: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative value in {0}")]
    Negative(&'static str),
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("orbit symmetry broken: relative spread {0:.3e} between orbit-mates")]
    SymmetryBroken(f64),
    #[error("scalar curvature {0} outside [-10, 10]; rank-r input looks unconverged")]
    SigmaOutOfRange(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("Newton solve failed: {0}")]
    Newton(String),
    #[error("outer step {step}: {source}")]
    RicciStep { step: usize, source: Box<Error> },
    #[error("inputs were built for different polygons")]
    PolygonMismatch,
    #[error("trace has no weight snapshots")]
    MissingSnapshots,
}

pub type Result<T> = std::result::Result<T, Error>;
