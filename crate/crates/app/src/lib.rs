//! Command-line front end for `anideg-core`: configuration, single runs,
//! δ-continuation studies, verification suites and plot data.

// `!(x > 0.0)` is the NaN-rejecting form of a range check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod run;
pub mod verify;

pub use config::{parse_config, RunConfig};
pub use error::{AppError, AppResult, ConfigError};
pub use plot::emit_plot_data;
pub use run::{cmd_continuation, cmd_run};
pub use verify::{cmd_verify, Suite};
