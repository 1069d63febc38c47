//! Online contextual bilateral trade with heavy-tailed valuations.
//!
//! A broker posts a price `P_t` for a context `x_t`; a buyer and a seller
//! arrive with valuations `V_t = m(x_t) + ξ_t`, `W_t = m(x_t) + ζ_t` and trade
//! happens when the price separates them. The noise may have infinite
//! variance. This crate provides the noise models and market functions, the
//! expected-gain calculus, truncated-mean estimators, epoch-based pricing
//! policies, an experiment harness with analytic regret accounting, and the
//! numerical ingredients of the matching lower bound.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod estimators;
pub mod harness;
pub mod lowerbound;
pub mod market;
pub mod noise;
pub mod policy;
pub mod quadrature;
pub mod rng;
pub mod trade;

pub use error::{Error, Result};
pub use noise::{Atom, NoiseModel, SmoothedTwoPoint};
pub use trade::ExpectedGainCurve;
