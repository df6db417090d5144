//! Toy end-to-end experiments, parameter sweeps and their CSV output.

pub mod checks;
pub mod config;
pub mod csv_io;
pub mod pipeline;
pub mod sweeps;

pub use config::{CsiMode, CsiModeKind, ExperimentConfig};
pub use csv_io::{emit_csv, parse_csv, read_csv, write_csv, CsvRow};
pub use pipeline::{run_toy_pipeline, simulate_trial, LinkSettings, PipelineSummary, SnrChoice, TrialRecord};
pub use sweeps::{sweep_csi_error, sweep_papr, sweep_scs_vs_snr};
