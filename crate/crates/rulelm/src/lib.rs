//! Standard-library companion of `rulelm-core`: text file formats, the scorer
//! client (HTTP service or fixture file), TOML pipeline configuration and the
//! batch stages behind the `rulelm` command.

pub mod config;
mod error;
pub mod io;
pub mod pipeline;
pub mod scorer;

pub use error::{Error, Result};
pub use rulelm_core as core;
