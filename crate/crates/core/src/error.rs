use thiserror::Error;

/// Errors raised across mesh handling, the solvers and the mapping pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("non-manifold edge ({0}, {1}) shared by {2} faces")]
    NonManifoldEdge(usize, usize, usize),

    #[error("inconsistent face orientation along edge ({0}, {1})")]
    Orientation(usize, usize),

    #[error("mesh is not genus-0: Euler characteristic is {euler} (expected 2)")]
    Genus { euler: i64 },

    #[error("degenerate face {face}")]
    DegenerateFace { face: usize },

    #[error("vertices {0} and {1} coincide")]
    DuplicateVertex(usize, usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vertex {vertex} lies at the projection pole")]
    VertexAtPole { vertex: usize },

    #[error("conformal factor collapses on face {face}")]
    ConformalCollapse { face: usize },

    #[error("Beltrami coefficient on face {face} has modulus {modulus} >= 1")]
    BeltramiTooLarge { face: usize, modulus: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("linear solve did not converge (relative residual {residual:e})")]
    NonConvergence { residual: f64 },

    #[error("diffusion produced a nonpositive density at vertex {vertex}")]
    NonPositiveDensity { vertex: usize },

    #[error("face {face} has zero area")]
    ZeroArea { face: usize },

    #[error("{count} flipped faces remain after correction")]
    FlipsRemain { count: usize },

    #[error("no face contains the query point")]
    Location,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
