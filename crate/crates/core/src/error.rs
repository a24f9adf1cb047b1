use thiserror::Error;

/// Errors raised by tree, matrix, polynomial and estimation routines.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("leaf {0} appears more than once")]
    DuplicateLeaf(usize),
    #[error("leaf labels must be exactly 1..{n}; {missing} is missing")]
    MissingLeaf { n: usize, missing: usize },
    #[error("vertex {0} has degree two in the unrooted tree")]
    DegreeTwo(usize),
    #[error("unknown vertex {0}")]
    UnknownVertex(usize),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("trees with more than {max} leaves are not supported (got {n})")]
    TooManyLeaves { n: usize, max: usize },
    #[error("leaf subset must be nonempty")]
    EmptyLeafSet,
    #[error("labels {0:?} are not four distinct leaves of the unrooted tree")]
    InvalidQuartet([usize; 4]),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("matrix is not in the tree subspace: entries ({}, {}) and ({}, {}) share an lca but differ by {deviation:e}", .pair_a.0, .pair_a.1, .pair_b.0, .pair_b.1)]
    NotInTreeSpace {
        pair_a: (usize, usize),
        pair_b: (usize, usize),
        deviation: f64,
    },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    Singular,
    #[error("edge weight of vertex {0} is negative")]
    NegativeWeight(usize),
    #[error("parameter of vertex {0} is zero")]
    ZeroParameter(usize),
    #[error("operation requires a binary tree")]
    NotBinary,
    #[error("symbolic computation limited to n <= {max} leaves (got {n})")]
    SizeBound { n: usize, max: usize },
    #[error("monomial {0} produced by two trek systems")]
    DuplicateMonomial(String),
    #[error("negative coefficient in certificate for quartet {quartet}: {term}")]
    NegativeCoefficient { quartet: String, term: String },
    #[error("quartet {0:?} is not trivalent")]
    NotTrivalent([usize; 4]),
    #[error("factorization identity fails for pair ({i}, {j}); difference {difference}")]
    FactorizationFailed { i: usize, j: usize, difference: String },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
