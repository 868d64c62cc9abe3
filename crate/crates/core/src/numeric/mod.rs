//! Numerical building blocks shared by the modules.

pub mod logsum;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;
