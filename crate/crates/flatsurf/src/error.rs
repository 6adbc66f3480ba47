//! Error types for the crate, one enum per subsystem.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("edge {0} has zero coordinate")]
    ZeroCoordinate(usize),
    #[error("coordinate vector is not in the kernel (residual {0:.3e})")]
    NotInKernel(f64),
    #[error("edge {edge} occurs {count} times across triangles and boundary pairs (expected 2)")]
    NonManifoldGluing { edge: usize, count: usize },
    #[error("edge {0} is traversed twice in the same direction; gluing is not orientable")]
    NonOrientableGluing(usize),
    #[error("surface is not connected")]
    Disconnected,
    #[error("cone angles do not match the declared angle data: {0}")]
    AngleMismatch(String),
    #[error("triangle {0} has non-positive signed area {1:.3e}")]
    DegenerateTriangle(usize, f64),
    #[error("invalid surface data: {0}")]
    BadData(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinsysError {
    #[error("angle sum {got:.12} differs from Gauss-Bonnet value {want:.12}")]
    InvalidAngleSum { got: f64, want: f64 },
    #[error("matrix kernel has dimension {got}, expected {want}")]
    RankMismatch { got: usize, want: usize },
    #[error("matrix structure is inconsistent: {0}")]
    StructureError(String),
    #[error("no primary system of indices exists (malformed matrix)")]
    NoValidSystem,
    #[error("no auxiliary system of indices found for the given primary system")]
    NoAuxiliarySystem,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("segment is parallel to the vertical field (horizontal length 0)")]
    ParallelSegment,
    #[error("surface is in special position: {0}")]
    SpecialPosition(String),
    #[error("flow sweep did not terminate within budget")]
    NonTermination,
    #[error("internal invariant violated: {0}")]
    AssertionFailure(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Linsys(#[from] LinsysError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("enumeration budget exceeded ({0} nodes)")]
    BudgetExceeded(usize),
    #[error("no essential subset of singularities exists (all angles in 2*pi*N)")]
    NoEssentialSubset,
    #[error("forest construction stalled: {0}")]
    ProcedureStall(String),
    #[error("subset enumeration supports at most {max} singularities, got {got}")]
    TooManySingularities { max: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("triple is outside the cylinder domain (eta1 {eta1:.3e}, eta2 {eta2:.3e})")]
    NotInD { eta1: f64, eta2: f64 },
    #[error("direction is parallel to the marked segment")]
    ParallelDirection,
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("degenerate layer: coefficient a_{0} vanishes")]
    DegenerateLayer(usize),
    #[error("sample count must be at least 1")]
    EmptyRun,
    #[error("epsilon must be positive for the scaled energy variant")]
    BadEpsilon,
}
