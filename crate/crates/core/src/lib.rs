pub mod analysis;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod nnet;
pub mod subword;
pub mod textio;
pub mod trainer;

pub use error::{Error, Result};
