//! Sensitivity analysis for counting conjunctive queries under bag semantics.
pub mod dp;
mod error;
pub mod oracle;
pub mod query;
pub mod relation;
pub mod sensitivity;
pub mod synth;

pub use error::{Error, Result};
