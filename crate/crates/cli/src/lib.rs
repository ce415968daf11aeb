//! Orchestration of active-learning experiments: single runs, seed x fold
//! suites, transfer replays, resumption and reports.

pub mod error;
pub mod experiment;
pub mod layout;
pub mod orchestrator;
pub mod report;
pub mod suite;
pub mod transfer;

pub use error::{Result, RunError};
pub use orchestrator::{resume, run_al_experiment, RunOptions, RunOutcome};
pub use report::{emit_report, ReportFormat};
pub use suite::{run_suite, SuiteOutcome};
pub use transfer::{replay_transfer, TransferPlan};
