use thiserror::Error;

/// Failure modes shared across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeecError {
    #[error("non-conforming mesh: {0}")]
    NonConformingMesh(String),
    #[error("degenerate cell {cell}")]
    DegenerateCell { cell: usize },
    #[error("mesh does not fit the domain: {0}")]
    GeometryMismatch(String),
    #[error("point not found in the mesh")]
    NotFound,
    #[error("unsupported quadrature degree {degree} in dimension {dim}")]
    UnsupportedDegree { dim: usize, degree: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("contraction of a 0-form")]
    ZeroFormContraction,
    #[error("unisolvence failure: {0}")]
    UnisolvenceFailure(String),
    #[error("trace not integrable: {0}")]
    NonIntegrableTrace(String),
    #[error("gauge is not star-shaped: {0}")]
    NotStarShaped(String),
    #[error("collar width {0} must lie in (0, 1]")]
    CollarTooWide(f64),
    #[error("point lies outside the extended domain")]
    EvaluationOutsideExtendedDomain,
    #[error("smoothing radius {rho} exceeds {bound}")]
    RadiusTooLarge { rho: f64, bound: f64 },
    #[error("empty admissible range: {0}")]
    EmptyAdmissibleRange(String),
    #[error("{0} violated")]
    InadmissibleEpsilon(String),
    #[error("non-finite value in degree of freedom {0}")]
    SingularDof(usize),
    #[error("Neumann check failed: |Id - Q| = {0}")]
    NeumannDivergence(f64),
    #[error("slice pieces do not cover the face: {0}")]
    SliceCoverage(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported report schema version {0}")]
    UnsupportedReportVersion(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, FeecError>;

impl From<std::io::Error> for FeecError {
    fn from(e: std::io::Error) -> Self {
        FeecError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for FeecError {
    fn from(e: serde_json::Error) -> Self {
        FeecError::Io(e.to_string())
    }
}
