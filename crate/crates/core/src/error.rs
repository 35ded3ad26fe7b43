use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point is degenerate: {0}")]
    DegeneratePoint(String),
    #[error("point is not on the model space: {0}")]
    NotOnModel(String),
    #[error("no real point has these confocal parameters: {0}")]
    NoRealPoint(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("line does not intersect the mirror")]
    NoIntersection,
    #[error("line is not tangent to the caustic (residual {0:e})")]
    NotTangent(f64),
    #[error("point lies inside the caustic")]
    InsideCaustic,
    #[error("billiard orbit escaped the table: {0}")]
    OrbitEscapesTable(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("rotation number {0} is not bracketed by the achievable range")]
    NotBracketed(f64),
    #[error("Staeckel matrix is singular (|det M| = {0:e})")]
    SingularStaeckelMatrix(f64),
    #[error("geodesic diagonal is not monotone in every coordinate: {0}")]
    NoMonotoneDiagonal(String),
    #[error("geodesic approaches a coordinate hypersurface asymptotically at q[{0}]")]
    AsymptoticApproach(usize),
    #[error("solver diverged: {0}")]
    SolverDiverged(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("point is not on the surface (residual {0:e})")]
    NotOnSurface(f64),
    #[error("geodesic meets the shell in {0} components, expected 2")]
    WrongComponentCount(usize),
    #[error("evaluation point is within {0:e} of the charged surface")]
    TooCloseToSurface(f64),
    #[error("the light cone of q is not contained in the light cone of p")]
    ConeConditionViolated,
    #[error("polynomial has non-real roots")]
    ComplexRoots,
    #[error("there are no hyperbolic surfaces of odd degree in hyperbolic space")]
    OddDegreeHyperbolic,
    #[error("point is not in the hyperbolicity domain")]
    NotInHyperbolicityDomain,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
