//! Monte Carlo error experiments: empirical errors, rate fits, diagnostics
//! and CSV output.

mod config;
mod diagnostics;
mod runner;
mod stats;
mod table;

pub use config::ExperimentConfig;
pub use diagnostics::{crossing_fraction, occupation_fraction};
pub use runner::{run_comparison, run_experiment, MAX_ABORT_FRACTION};
pub use stats::{
    empirical_error, empirical_error_from_norms, fit_log2_rate, linear_fit, ErrorEstimate, LinearFit, RateFit,
};
pub use table::{fit_rate, parse_csv, CsvRow, Diagnostic, DiagnosticKind, ErrorRow, ErrorTable, ParsedCsv, CSV_HEADER};
