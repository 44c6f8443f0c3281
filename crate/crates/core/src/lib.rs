//! Simulation and numerical verification toolkit for random multiplicative
//! cascade measures on self-similar sets.
//!
//! The crate builds attractors of iterated function systems of contracting
//! similarities, runs multiplicative cascades (deterministic Bernoulli
//! weights, fractal percolation, general discrete weight laws) on their
//! symbolic coding trees, and estimates dimensions of the resulting measures,
//! their orthogonal projections, slices, smooth images and pinned distance
//! sets. Estimators are cross-checked against closed-form dimension formulas
//! of the form (conditional entropy + weight entropy) / (mean log ratio).
//!
//! Everything is deterministic given a 64-bit master seed: per-word weight
//! draws come from a counter-based generator keyed by a stable hash of
//! (seed, word), so a realization is consistent across truncation levels and
//! safe to evaluate in parallel.

// Negated comparisons like `!(x > 0.0)` are deliberate NaN-rejecting guards,
// and indexed loops in the linear algebra mirror the written-out sums.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cascade;
pub mod error;
pub mod fit;
pub mod ifs;
pub mod image;
pub mod measure;
pub mod peyriere;
pub mod projection;
pub mod rng;
pub mod rotation;

pub use error::{Error, Result};
