pub mod complexity;
pub mod config;
pub mod curriculum;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod library;
pub mod model;
mod serde_ext;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
