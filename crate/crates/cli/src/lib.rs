//! Library surface behind the `petreq` binary: configuration, dataset I/O,
//! the subcommand implementations, and the experiment orchestrator. The
//! acceptance suite drives the pipeline through this crate.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod io;

use petreq_core::error::Error;

/// Process exit code policy: 1 for usage and configuration errors, 2 for
/// data errors, 3 for numeric failures.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::InvalidConfig(_)
        | Error::InvalidPattern { .. }
        | Error::NonInjectiveVerbalizer { .. }
        | Error::SnapshotVersion(_)
        | Error::Toml(_) => 1,
        Error::NonFiniteLoss { .. } => 3,
        _ => 2,
    }
}
