//! Scenario files, calibrated presets, report writers, sweeps and the
//! command line for `fabric-sim-core`.

pub mod cli;
pub mod config_io;
pub mod presets;
pub mod report;
pub mod sweep;

pub use config_io::{emit_config, load_config, parse_config, LoadError};
pub use presets::{expand, preset};
