//! Command-line front end for the `mcc-core` codec: image files, argument
//! handling and JSON run reports.

pub mod cli;
pub mod error;
pub mod io;
pub mod report;

pub use cli::{run, Cli};
pub use error::{CliError, Result};
