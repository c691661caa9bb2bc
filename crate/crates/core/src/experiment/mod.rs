//! End-to-end runs: data, forecasts, reservoir states, intervals, metrics
//! and output files.

mod config;
mod grid;
mod output;
mod pipeline;

use rayon::prelude::*;

use crate::error::Result;
use crate::evaluation::{aggregate_reports, AggregateReport};

pub use config::{DataSource, ExperimentConfig, ForecasterConfig, Method};
pub use grid::{grid_search, GridPoint, GridResult, ParamGrid};
pub use output::{write_intervals_csv, write_outputs, SUMMARY_FORMAT_VERSION};
pub use pipeline::{
    encode_series, evaluate_segment, load_series, prepare_series, reservoir_inputs, run_prepared, run_seed,
    PreparedSeries, RunOutput, StepOutput,
};

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<RunOutput>,
    pub aggregate: AggregateReport,
}

/// Runs every configured seed (in parallel) and, when an output directory
/// is set, writes the per-seed interval files and the summary. Nothing is
/// written unless all seeds succeed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
    let aggregate = aggregate_reports(&reports)?;
    let out = ExperimentOutput { runs, aggregate };
    if let Some(dir) = &config.output {
        write_outputs(dir, config, &out)?;
    }
    Ok(out)
}
