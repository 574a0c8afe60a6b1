//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by exact arithmetic, series operations, evaluators, and the
/// identity registry.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Cyclotomic operands declared over different orders.
    #[error("mismatched cyclotomic orders: {0} vs {1} (rescale to a common order first)")]
    MismatchedOrders(u64, u64),

    /// Inverse of zero in a coefficient field.
    #[error("division by zero in Q(zeta_{0})")]
    DivisionByZero(u64),

    /// Series operands carry different truncation boxes.
    #[error("truncation box mismatch: {0}")]
    BoxMismatch(String),

    /// Series operands carry different expansion regions.
    #[error("expansion region mismatch")]
    RegionMismatch,

    /// Geometric expansion of 1/(1-u) at u = 1.
    #[error("pole: geometric expansion of 1/(1-u) at u = 1")]
    GeometricPole,

    /// A denominator 1 - u with |u| = 1 under the region convention but u != 1;
    /// no expansion direction exists.
    #[error("unsupported expansion: |u| = 1 under the region convention ({0})")]
    UnsupportedExpansion(String),

    /// Substitution leaves the representable exponent lattice.
    #[error("unsupported substitution: {0}")]
    UnsupportedSubstitution(String),

    /// Numeric evaluation outside the upper half plane.
    #[error("domain error: Im(tau) = {0} must be positive")]
    Domain(f64),

    /// Evaluation point too close to a pole of a defining sum.
    #[error("pole proximity: min denominator distance {dist:.3e} < {guard:.3e}")]
    PoleProximity { dist: f64, guard: f64 },

    /// A closed form's theta prefactor vanishes at the requested point.
    #[error("prefactor zero: |{name}| = {magnitude:.3e} at this point")]
    PrefactorZero { name: String, magnitude: f64 },

    /// Parameters outside an operation's or identity's stated scope.
    #[error("scope error: {0}")]
    Scope(String),

    /// Malformed request (CLI flags, registry lookups, precondition misuse).
    #[error("usage error: {0}")]
    Usage(String),

    /// A sampler could not find an admissible point.
    #[error("sampling failed: {0} resamples exhausted")]
    SamplingExhausted(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
