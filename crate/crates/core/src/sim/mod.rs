//! Data-generating processes, Monte-Carlo truths and the study runner.

pub mod dgp;
pub mod report;
pub mod study;
pub mod truth;

pub use dgp::{generate, Dgp, DgpSpec, Truth};
pub use study::{run_once, run_study, summarize, Draw, Failure, RunOutcome, SimNuisance, SimReport, StudySpec, Summary, Target};
pub use report::{write_report_csv, write_sidecar, REPORT_COLUMNS};
pub use truth::{census_psi, reference, true_psi, true_psi_mc, Reference};
