//! Data loading, synthetic data, experiment presets and reports for the
//! hybrid recommender benchmark.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod modelfile;
pub mod report;
pub mod split;
pub mod synth;

pub use config::{ExperimentConfig, DEFAULT_ROWS, PRESETS};
pub use data::{load_json_reviews, load_movielens};
pub use error::{BenchError, Result};
pub use experiment::{prepare, run_experiment, ExperimentOutcome, PreparedData, Runner};
pub use modelfile::{load_model, save_model, ModelFile};
pub use report::{emit_report, Format, ReportRow};
pub use split::{split_leave_one_out, SplitDataset};
pub use synth::{generate_synthetic, SynthConfig};
