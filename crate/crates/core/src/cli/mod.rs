//! Run configuration, the check table and file outputs behind the binary.

mod config;
mod run;
pub mod verify;

pub use config::*;
pub use run::*;
