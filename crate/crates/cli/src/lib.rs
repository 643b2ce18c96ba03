//! Command-line orchestration for the viscoelastic boundary-control toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use run::{run, RunOutcome};
