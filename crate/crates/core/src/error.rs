//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All recoverable failures reported by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A permutation array is malformed (wrong length, not a bijection, fixed points, ...).
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    /// A face other than the root face and the holes does not have degree 4.
    #[error("face {0} is not a quadrilateral")]
    NonQuadFace(usize),
    /// The map does not satisfy V - E + F = 2.
    #[error("Euler formula violated: V={vertices}, E={edges}, F={faces}")]
    EulerViolation {
        /// Number of vertices.
        vertices: usize,
        /// Number of edges.
        edges: usize,
        /// Number of faces.
        faces: usize,
    },
    /// A hole record is inconsistent with the underlying map.
    #[error("invalid hole: {0}")]
    InvalidHole(String),
    /// The perimeter of a fill does not match the degree of its hole.
    #[error("perimeter mismatch for hole {0}")]
    PerimeterMismatch(usize),
    /// The operation needs a hole (or a hole-indexed list of the right size).
    #[error("not a hole: {0}")]
    NotAHole(String),
    /// The dart is not on the root face.
    #[error("dart {0} is not on the root face")]
    DartNotOnBoundary(usize),
    /// The dart is not on the active boundary (the union of hole faces).
    #[error("dart {0} is not on the active boundary")]
    NotActive(usize),
    /// A type-2 event whose labels do not add up to the hole semi-perimeter minus one.
    #[error("split ({l1},{l2}) does not fit a hole of semi-perimeter {ell}")]
    SplitArityMismatch {
        /// First label.
        l1: usize,
        /// Second label.
        l2: usize,
        /// Semi-perimeter of the peeled hole.
        ell: usize,
    },
    /// The first map is not a submap of the second one.
    #[error("not a submap")]
    NotSubmap,
    /// A peeling algorithm returned a dart outside the active boundary.
    #[error("peeling algorithm returned inactive dart {0}")]
    AlgorithmReturnedInactiveDart(usize),
    /// Index outside a precomputed table.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    /// Ratio with a zero denominator.
    #[error("division by zero")]
    DivisionByZero,
    /// Exhaustive generation requested beyond its configured bound.
    #[error("generation budget exceeded: l + 2f = {requested} > {bound}")]
    BudgetExceeded {
        /// Requested value of l + 2f.
        requested: usize,
        /// Configured bound.
        bound: usize,
    },
    /// The extrapolated tail of a truncated partition function is too large.
    #[error("tail tolerance not met: relative tail {tail:e} > {tol:e}")]
    TailToleranceNotMet {
        /// Estimated relative tail.
        tail: f64,
        /// Requested tolerance.
        tol: f64,
    },
    /// A census table does not cover the requested parameters.
    #[error("census does not cover {0}")]
    CensusMissing(String),
    /// The requested class is empty.
    #[error("empty class")]
    EmptyClass,
    /// A conditioning event never occurred in a Monte Carlo run.
    #[error("conditioning event never hit")]
    EventNeverHit,
    /// A contingency table without enough nonempty rows or columns.
    #[error("degenerate table: {0}")]
    DegenerateTable(String),
    /// Operation defined only for a specific semi-perimeter.
    #[error("wrong semi-perimeter: expected {expected}, found {found}")]
    WrongPerimeter {
        /// Required semi-perimeter.
        expected: usize,
        /// Semi-perimeter of the input.
        found: usize,
    },
    /// Exact summation over spins would be too large.
    #[error("too many faces for exact summation: {0}")]
    TooManyFaces(usize),
    /// The Gaussian quadratic form is not positive definite.
    #[error("singular quadratic form")]
    SingularForm,
    /// A spin value is missing or outside the support of the spin measure.
    #[error("missing or invalid spin: {0}")]
    MissingSpin(String),
    /// A stratum or bin has too few samples for a test.
    #[error("bin too thin: {0}")]
    BinTooThin(String),
    /// An edge length is not strictly positive.
    #[error("nonpositive length {0}")]
    NonpositiveLength(f64),
    /// Adaptive quadrature did not reach its tolerance.
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    /// Invalid discretization grid.
    #[error("bad grid: {0}")]
    BadGrid(String),
    /// The skeleton cap admits no skeleton.
    #[error("skeleton cap cannot be satisfied: {0}")]
    CapUnsatisfiable(String),
    /// A density estimate has no hits at some grid point.
    #[error("insufficient hits: {0}")]
    InsufficientHits(String),
    /// Malformed text input (codec strings, JSON, CSV).
    #[error("parse error: {0}")]
    Parse(String),
    /// Any other invalid argument.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
