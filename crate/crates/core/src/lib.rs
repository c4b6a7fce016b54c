pub mod baseline;
pub mod cae;
pub mod cli;
pub mod clustering;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod pipeline;

pub use error::{Error, Result};
