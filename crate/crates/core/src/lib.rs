pub mod config;
pub mod data;
pub mod diff;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod hovr;
pub mod losses;
pub mod model;
pub mod optimizer;

pub use error::{Error, Result};
