pub mod corpus;
pub mod error;
pub mod gradcheck;
pub mod infer;
pub mod json;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
