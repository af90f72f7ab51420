//! Configuration ingestion, scenario orchestration and output files.

pub mod config;
pub mod plot;
pub mod records;
pub mod run;

pub use config::{ConfigFile, ExperimentConfig, Scenario};
pub use plot::emit_plot_data;
pub use records::{Check, Summary, TrialRecord, TrialTable};
pub use run::{run, run_and_write, RunOutput};
