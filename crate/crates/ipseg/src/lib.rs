//! File formats, segmenter adapters, evaluation harness and command-line
//! driver around [`ipseg_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod io;
pub mod manifest;
pub mod prompts;
pub mod segmenter;

pub use error::{AdapterError, Error, Result};
