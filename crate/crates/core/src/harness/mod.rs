//! Experiment plumbing: JSON run configs, optimizer races over η/ε grids,
//! CSV and summary output, checkpoints, and the identity verification suite.

mod checkpoint;
mod config;
mod runner;
mod verify;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{
    DatasetSpec, InitSpec, ObjectiveSpec, OptimizerEntry, RunConfig, DEFAULT_EPS, DEFAULT_LR_GRID,
};
pub use runner::{
    compare, jobs, resolve_output_root, resume_run, run_experiment, select_best, sign_test_p,
    write_report_csv, Comparison, GridPointSummary, Job, OptimizerSummary, RunRecord, Summary,
    CSV_HEADER, OUTPUT_ROOT_ENV,
};
pub use verify::{verify_suite, VerifyOptions, VerifyReport, VerifyRow, DEFAULT_SAMPLES};
