//! Fin capacitor electrostatics, lumped-element resonator analysis and
//! merged-element transmon junction design.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod fab;
pub mod fieldsolver;
pub mod geometry;
pub mod met;
pub mod resonator;
pub mod units;

pub use error::{Error, Result};
pub use exec::Execution;
