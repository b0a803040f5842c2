//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// A sample must contain at least one observation.
    #[error("sample contains no observations")]
    EmptySample,

    /// The harmonic mean is undefined when an observation is zero.
    #[error("observation is zero, reciprocal undefined")]
    ZeroObservation,

    /// Grades and weights must be aligned index by index.
    #[error("sample has {sample} observations but weight vector has {weights}")]
    LengthMismatch { sample: usize, weights: usize },

    /// Weighted aggregation needs at least one positive weight.
    #[error("all weights are zero")]
    AllZeroWeights,

    /// Grades live on the rescaled 0..=10 scale.
    #[error("grade {0} is not finite or outside 0..=10")]
    InvalidGrade(f64),

    /// Weights must be finite and nonnegative.
    #[error("weight {0} is not finite or negative")]
    InvalidWeight(f64),

    /// An engagement or performance record violates its invariants.
    #[error("invalid record: {0}")]
    InvalidRecord(String),

    /// Correlation is undefined when a vector is constant.
    #[error("vector is constant, correlation undefined")]
    ConstantVector,

    /// An operation received fewer values than it needs.
    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },

    /// A rubric dimension lies outside the 1..=5 scale.
    #[error("rubric dimension {dimension} is {value}, outside 1..=5")]
    InvalidRubric {
        dimension: &'static str,
        value: i64,
    },

    /// A CSV input does not start with the expected header row.
    #[error("malformed header: expected `{expected}`, got `{got}`")]
    MalformedHeader { expected: String, got: String },

    /// Every essay entering PeerRank must have at least one grader.
    #[error("essay {0} has no graders")]
    EmptyGraders(usize),

    /// A grade matrix entry is out of range or self-referential.
    #[error("invalid grade matrix entry ({rater}, {essay}): {reason}")]
    InvalidMatrixEntry {
        rater: usize,
        essay: usize,
        reason: String,
    },

    /// Review assignment needs 1 <= k < n.
    #[error("cannot assign {k} reviews per student among {n} students")]
    InvalidK { n: usize, k: usize },

    /// A configuration value is out of its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The requested analysis needs instructor grades for every retained essay.
    #[error("instructor grade missing for essay {0}")]
    InstructorRequired(String),
}
