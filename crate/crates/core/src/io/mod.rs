//! Experiment configuration, incidence data and result files.

pub mod config;
pub mod data;
pub mod output;

pub use config::ExperimentConfig;
pub use data::{aggregate, load_incidence, parse_incidence, IncidenceSeries, TimeIndex};
pub use output::{
    read_final_states, read_forecast, read_manifest, read_param_history, read_posterior_samples, read_state_bands,
    write_results, Manifest, RunArtifacts,
};
