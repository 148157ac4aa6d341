//! Config-driven experiments that emit CSV tables.

pub mod config;
pub mod csv;
pub mod experiments;

pub use config::Config;
pub use csv::{Row, Table, Value};
pub use experiments::{run_experiment, ExperimentKind};
