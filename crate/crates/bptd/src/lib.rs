//! Files, threads and the command line around `bptd-core`.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod compare;
pub mod config;
pub mod error;
pub mod export;
pub mod fit;
pub mod geweke;
pub mod ingest;
pub mod runner;
pub mod simulate;
pub mod tensor_io;
pub mod trace;

pub use error::{AppError, Result};
