// `!(x < y)` guards deliberately treat NaN as a violation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fit;
pub mod generating;
pub mod laplace;
pub mod measure;
pub mod model;
pub mod pricing;
pub mod quad;
pub mod regvar;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
