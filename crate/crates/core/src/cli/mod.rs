//! Configuration-driven runs behind the `tvpsv` binary.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_forecast, cmd_simulate, cmd_trade, cmd_verify, ForecastSummary, VerifyReport,
};
pub use config::{RunConfig, SCHEMA_VERSION};

use crate::error::Error;

/// 1 for bad input or configuration, 2 for failures while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::Window { .. }
        | Error::Divergence { .. }
        | Error::NotPositiveDefinite(_)
        | Error::Degenerate(_) => 2,
        _ => 1,
    }
}
