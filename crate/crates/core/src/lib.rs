//! Mock theta (Appell-Lerch) functions, classical theta/eta building blocks,
//! and N=3 superconformal (super)characters — evaluated numerically and as
//! exact truncated q-expansions, with a registry that machine-checks every
//! identity relating them.
//!
//! The crate is organized around five layers:
//! - [`cyclo`]: exact coefficients — arbitrary-precision rationals and
//!   cyclotomic numbers in canonical form.
//! - [`series`]: truncated Puiseux/Laurent series in q, x1, x2 with exact
//!   rational exponents, under an explicit truncation box and expansion
//!   region.
//! - [`thetas`]: Jacobi theta_{k,m} (plain and alternating), Mumford
//!   vartheta_{ab}, Dedekind eta — numeric and formal.
//! - [`appell`]: the mock theta functions Phi^{[m,s]}_1, Phi^{[m,s]}_2,
//!   Phi^{[m,s]}, their closed forms, and the resolution algorithm that
//!   produces a closed-form evaluation plan for arbitrary (m, s).
//! - [`identities`] and [`characters`]: the checkable identity registry
//!   (with the D(2,1;a) lattice-sum oracle) and the two-route N=3
//!   character computations.
//!
//! The `examples/` directory has one runnable example per capability; the
//! `mock-theta` binary exposes `eval`, `expand`, `verify`, and `character`
//! subcommands over the same library API.

pub mod appell;
pub mod characters;
pub mod cli;
pub mod cyclo;
pub mod error;
pub mod halfint;
pub mod identities;
pub mod series;
pub mod thetas;

pub use error::{Error, Result};
pub use halfint::HalfInt;
