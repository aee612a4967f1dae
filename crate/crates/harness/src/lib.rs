//! Instance files, independent verification, trace and schedule formats,
//! and scaling benchmarks for the DMM algorithms in `dmm-core`.

pub mod bench;
pub mod error;
pub mod format;
pub mod instance;
pub mod run;
pub mod verify;

pub use error::{HarnessError, Result};
pub use instance::{Instance, Kind};
pub use run::{run, Algorithm, RunFlags, RunOutcome, RunReport};
