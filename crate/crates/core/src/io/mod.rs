//! CSV datasets, key=value run configurations and JSON reports.

mod config;
mod data;
mod report;

pub use config::{read_config, write_config, ExperimentKind, RunConfig};
pub use data::{
    load_comparisons, load_covariates, load_dataset, write_csv_rows, write_dataset, ComparisonFormat, LoadReport,
};
pub use report::{read_report, report_to_string, write_report, FitRecord, FIT_KIND, SCHEMA_VERSION};
