//! Early stopping for majority-vote sampling of stochastic answer sources.
//!
//! A [`scheduler`] draws answers from a [`solvers::Solver`] in concurrent
//! turns and consults a [`stopping::StoppingPolicy`] after each turn. The
//! [`simulator`] measures policies against estimated answer distributions and
//! [`bench`] runs them over datasets.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod fixtures;
pub mod numerics;
pub mod scheduler;
pub mod seed;
pub mod simulator;
pub mod solvers;
pub mod stopping;
pub mod tally;

pub use error::{Error, Result};
