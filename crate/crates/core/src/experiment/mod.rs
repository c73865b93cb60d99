//! Synthetic experiments, reference baselines and result files.

mod als;
mod config;
mod cpderr;
mod files;
mod generate;
mod run;

pub use als::{als_baseline, als_update};
pub use config::{apply_solver_key, parse_dims, parse_key_values, EngineChoice, ExperimentSpec};
pub use cpderr::factor_match_error;
pub use files::{read_state, write_history, write_state};
pub use generate::generate;
pub use run::{
    realization_seeds, run_experiment, run_realization, write_outputs, write_records, write_summary,
    write_timings, write_trajectories, RunRecord, Summary,
};
