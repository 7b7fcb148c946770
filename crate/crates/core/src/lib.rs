pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod linkfn;
pub mod math;
pub mod prediction;

pub use error::{Result, RtmError};
