pub mod cli;
pub mod error;
pub mod geodesic;
pub mod io;
pub mod metric;
pub mod motion;
pub mod nets;
pub mod types;
pub mod vae;

pub use error::{Error, Result};
