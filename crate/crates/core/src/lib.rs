pub mod corpus;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod substrate;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
