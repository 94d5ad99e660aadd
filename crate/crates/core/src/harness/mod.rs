//! Configuration, experiment orchestration and output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod runs;
pub mod validate;

pub use config::{FpGridSpec, InitSpec, KernelParams, ObservableParams, PotentialParams, Settings};
pub use experiment::{run_experiment, ExperimentKind, ExperimentReport, ExperimentSpec, SweepRecord};
