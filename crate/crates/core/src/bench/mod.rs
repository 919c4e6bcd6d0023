//! Experiment harness: method × adapter × support-count × seed sweeps,
//! multi-seed accuracy, peak tensor memory and wall time, CSV and JSON
//! emission, and hyperparameter grid search.

mod hp;
mod measure;
mod protocol;
mod sweep;
mod table;

pub use hp::{hp_to_csv, hyperparam_sweep, HpGrid, HpResult, HpRow, EPOCH_RANGE, HP_CSV_HEADER};
pub use measure::{measure_peak_memory, measure_wall_time, Timing};
pub use protocol::{accuracy_protocol, mean_std, ProtocolResult, SeedAccuracy};
pub use sweep::{
    run_cell, run_sweep, run_sweep_with, summarize, summary_path, BenchRecord, DataRef, Method, ModelRef,
    SummaryRow, SweepConfig, SweepEnv, SweepOutput, SweepSummary,
};
pub use table::{fmt_real, records_to_csv, write_csv, write_summary, write_text, CSV_HEADER};
