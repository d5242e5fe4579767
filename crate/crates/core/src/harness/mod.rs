//! Scenario-driven experiments: each replication builds a swarm, samples a
//! request, virtualizes it and, when accepted, runs the chosen estimators on
//! the virtual topology.

mod experiment;
mod output;
mod scenario;

pub use experiment::{
    run_experiment, run_experiment_parallel, run_experiment_with_events, run_replication,
    EstimatorRecord, GridPoint, MetricRecord, MetricRecordKey,
};
pub use output::{
    csv_rows, emit_results, read_csv, write_csv, write_json, CsvRow, Format, CSV_COLUMNS,
};
pub use scenario::{load_scenario, Algorithm, CenterPolicy, Scenario};
