use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),

    #[error("grid function is not double-even (relative deviation {deviation:.3e})")]
    SymmetryViolation { deviation: f64 },

    #[error("transform left an imaginary residue of {residue:.3e} (relative)")]
    ImaginaryResidue { residue: f64 },

    #[error("index set ({n1}, {n2}) is too large for a {rows}x{cols} grid (need 2n < N)")]
    IndexSetTooLarge {
        n1: usize,
        n2: usize,
        rows: usize,
        cols: usize,
    },

    #[error("dual polynomial is infeasible: min Q = {min_q:.3e}")]
    InfeasibleDual { min_q: f64 },

    #[error("invalid moments: {0}")]
    InvalidMoments(String),

    #[error("infeasible rate budget: {0}")]
    InfeasibleBudget(String),

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("invalid nu: {0}")]
    InvalidNu(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no candidate solve converged")]
    NoCandidateConverged,

    #[error("container references external prior {0:?} but none was supplied")]
    MissingPrior(String),

    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Container decoding failures.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),

    #[error("length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("payload contains a non-finite value")]
    NonFinitePayload,

    #[error("payload checksum mismatch")]
    ChecksumMismatch,

    #[error("invalid header: {0}")]
    InvalidHeader(String),
}
