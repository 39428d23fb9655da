//! Online learning of smooth functions on `[0, 1]`.
//!
//! The crate simulates the learner/adversary game for functions of bounded
//! q-action, in both the standard protocol and the variant where the
//! adversary may lie a bounded number of times. It also provides numerical
//! checkers for the inequalities that drive the error bounds, and a
//! constructive pipeline producing polynomials that interpolate a point set
//! while keeping their q-action in budget.

pub mod adversaries;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod interpolant;
pub mod learners;
pub mod lemma_oracle;
pub mod poly_approx;

pub use error::{Error, Result};
pub use interpolant::{ActionExponent, Exponents, FeasibleInterval, SamplePoint, SampleSet};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
