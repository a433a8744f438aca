//! Scenario-driven front end to `affine-levy`.

// `!(x < y)` guards deliberately treat NaN as a violation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundled;
pub mod expr;
pub mod plot;
pub mod runner;
pub mod scenario;

pub use scenario::{Analysis, Scenario, SchemaError};
