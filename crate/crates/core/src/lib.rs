//! Simulation and exact computation for transient one-dimensional random
//! walks in random environment: potential and valley structure, quenched
//! formulas, h-transform accelerated sampling and stable limit laws.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env_model;
pub mod error;
pub mod experiments;
pub mod numeric;
pub mod potential;
pub mod quenched;
pub mod stable_limits;
pub mod valleys;
pub mod walker;

pub use error::{Error, Result};
