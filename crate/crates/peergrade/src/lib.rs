//! Aggregation of rubric-based peer grades into per-essay scores.
//!
//! The library covers the full pipeline from raw CSV exports to a validity
//! report:
//!
//! - [`aggregate`]: the eight aggregation functions (arithmetic, geometric
//!   and harmonic means plus the median, each unweighted and weighted).
//! - [`weight`]: personalized rater weights derived from course engagement
//!   (lessons completed on time) or performance (chapter quiz marks).
//! - [`peerrank`]: the PeerRank / Generalized PeerRank fixed-point
//!   iteration used as a comparison baseline.
//! - [`validity`]: Pearson correlation against instructor grades with
//!   t-test significance, descriptive statistics and plot data.
//! - [`ingest`]: CSV parsing, rubric rescaling and dataset assembly.
//! - [`simulate`]: seeded synthetic cohorts with competence-linked rater
//!   noise for Monte-Carlo experiments.
//!
//! All computation is deterministic: identical inputs (including seeds)
//! produce identical outputs.

pub mod aggregate;
pub mod error;
pub mod ingest;
pub mod peerrank;
pub mod simulate;
pub mod validity;
pub mod weight;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Opaque student identifier as it appears in the input files.
pub type StudentId = String;

/// Opaque essay identifier as it appears in the input files.
pub type EssayId = String;
