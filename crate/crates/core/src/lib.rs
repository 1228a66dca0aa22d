pub mod admin;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod feed;
pub mod model;

pub use error::{Error, Result};
