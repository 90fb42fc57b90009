//! Config ingestion, experiment runs and artifact output for the `pmc-lab`
//! binary.

pub mod config;
pub mod run;

pub use config::{validate, Experiment, ExperimentConfig, RawConfig, ValidationReport};
pub use run::{run, Assertion, RunError, RunManifest};
