// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affinity;
pub mod analysis;
pub mod dataset;
pub mod epmd;
pub mod error;
pub mod featurize;
pub mod harness;
pub mod linear_models;
pub mod metrics;
pub mod representations;
mod util;

pub use error::{Error, Result};
