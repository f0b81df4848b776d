//! Experiment documents, the shipped catalog and the artifact-writing runner.

mod catalog;
mod config;
mod run;

pub use catalog::{find_experiment, list_experiments, CatalogEntry};
pub use config::{
    experiment_rl, morphology_preset, parse_config, DomainSection, ExperimentConfig,
    TransferSection, MORPHOLOGIES,
};
pub use run::{parse_summary, run_experiment, summary_csv, RunReport, SummaryRow};
