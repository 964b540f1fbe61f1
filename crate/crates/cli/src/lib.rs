//! Command-line frontend for the streamskip engine: run pipelines on
//! synthetic or file frame streams, benchmark scenarios, build and query
//! IVF-PQ indexes, and inspect optical flow.

pub mod app;
pub mod bench;
pub mod config;
pub mod error;
pub mod flow;
pub mod index;
pub mod run;

pub use app::main_with_args;
pub use config::AppConfig;
pub use error::{CliError, CliResult};
