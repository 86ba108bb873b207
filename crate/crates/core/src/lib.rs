//! Exact accounting for concurrent composition of interactive differentially
//! private mechanisms.
//!
//! Numeric code is generic over [`Scalar`]; the verification paths run on
//! [`Rational`] so every equality they check is exact.

pub mod adversary;
pub mod bounds;
pub mod composition;
pub mod error;
pub mod experiments;
pub mod format;
pub mod lp;
pub mod mechanism;
pub mod prob;
pub mod rr_sim;
pub mod scalar;

pub use error::{Error, ErrorClass, Result};
pub use mechanism::{FiniteMechanism, Limits, RRSymbol, TwoRoundParams};
pub use prob::{
    hockey_stick, indistinguishable, min_eps_for_delta, FiniteDist, Label, PrivacyParams, Prob,
};
pub use scalar::Scalar;

/// Arbitrary-precision rational used on all exact paths.
pub type Rational = num_rational::BigRational;
pub type ExactDist = FiniteDist<Rational>;
pub type FloatDist = FiniteDist<f64>;
pub type ExactMechanism = FiniteMechanism<Rational>;
pub type ExactProb = Prob<Rational>;
