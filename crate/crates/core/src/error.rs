//! Error type shared across the crate.

use thiserror::Error;

/// Alias for results produced by this crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Level count must be at least 2.
    #[error("invalid level count d = {d}; need d >= 2")]
    InvalidDimension { d: usize },

    /// Two objects that must share a level count do not.
    #[error("level count mismatch: {a} vs {b}")]
    DimensionClash { a: usize, b: usize },

    /// Two registers that must have the same shape do not.
    #[error("register shape mismatch: {expected} vs {got} amplitudes")]
    ShapeMismatch { expected: usize, got: usize },

    /// A site index fell outside the register or graph.
    #[error("site {site} out of range for {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },

    /// An operation got the same site twice where two distinct sites are needed.
    #[error("sites must be distinct, got {site} twice")]
    DuplicateSite { site: usize },

    /// A state factor or amplitude list has the wrong length.
    #[error("amplitude list has length {got}, expected {expected}")]
    BadAmplitudeCount { expected: usize, got: usize },

    /// A vector that must be normalizable has (near-)zero norm.
    #[error("vector norm {norm:.3e} is too small to normalize")]
    ZeroNorm { norm: f64 },

    /// A state or factor that must arrive normalized is not.
    #[error("vector is not normalized: norm {norm:.6}")]
    NotNormalized { norm: f64 },

    /// A product construction needs at least one factor.
    #[error("need at least one factor")]
    NoFactors,

    /// A matrix that must be unitary is not, within tolerance.
    #[error("matrix is not unitary: max deviation {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    /// Requested register exceeds the amplitude cap.
    #[error("register of {amps} amplitudes exceeds the cap of {cap} (see set_register_cap)")]
    RegisterTooLarge { amps: u128, cap: usize },

    /// A measurement outcome index is not in 0..d.
    #[error("outcome {value} out of range for d = {d}")]
    OutcomeOutOfRange { value: usize, d: usize },

    /// A forced measurement branch has (near-)zero probability.
    #[error("forced branch has probability {probability:.3e}; it cannot occur")]
    ImpossibleBranch { probability: f64 },

    /// An outcome record does not match the sites it must cover.
    #[error("outcome record problem at site {site}: {reason}")]
    BadOutcomeRecord { site: usize, reason: &'static str },

    /// A bipartition for entropy must be a nonempty proper subset.
    #[error("bipartition must be a nonempty proper subset of the sites")]
    TrivialBipartition,

    /// Graph construction parameters are out of range.
    #[error("bad graph shape: {0}")]
    BadGraphShape(String),

    /// A site does not have the role an operation requires.
    #[error("site {site} has the wrong role: {reason}")]
    BadRole { site: usize, reason: &'static str },

    /// Text that should encode a graph does not parse.
    #[error("graph text line {line}: {reason}")]
    GraphParse { line: usize, reason: String },

    /// The graph is not one the requested closed-form correction covers.
    #[error("unsupported graph: {0}")]
    UnsupportedGraph(String),

    /// A two-level operation was asked of a higher-dimensional register.
    #[error("operation is defined for qubits only, got d = {d}")]
    QubitOnly { d: usize },

    /// Enumerating every branch would visit too many of them.
    #[error("enumerating {branches} branches exceeds the cap of {cap}; use a sampling policy")]
    TooManyBranches { branches: u128, cap: usize },

    /// No correction could restore the input; the protocol run is broken.
    #[error("protocol broken: {0}")]
    ProtocolBroken(String),
}
