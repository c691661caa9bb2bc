use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::evaluation::{AggregateReport, EvalReport};

use super::config::ExperimentConfig;
use super::pipeline::StepOutput;
use super::ExperimentOutput;

pub const SUMMARY_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct SeedReport<'a> {
    seed: u64,
    #[serde(flatten)]
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct Summary<'a> {
    format_version: u32,
    config: &'a ExperimentConfig,
    runs: Vec<SeedReport<'a>>,
    aggregate: &'a AggregateReport,
}

/// Floats use Rust's shortest round-trip formatting, so identical runs give
/// byte-identical files.
pub fn write_intervals_csv(path: &Path, steps: &[StepOutput]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "time,center,lower,upper,y,covered,winkler,ess")?;
    for s in steps {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.time, s.center, s.lower, s.upper, s.y, s.covered as u8, s.winkler, s.ess
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_all(dir: &Path, config: &ExperimentConfig, out: &ExperimentOutput, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(dir)?;
    for run in &out.runs {
        let path = dir.join(format!("intervals_seed{}.csv", run.seed));
        written.push(path.clone());
        write_intervals_csv(&path, &run.steps)?;
    }
    // Per-step records already live in the CSV files.
    let stripped: Vec<EvalReport> = out
        .runs
        .iter()
        .map(|r| EvalReport {
            per_step: None,
            ..r.report.clone()
        })
        .collect();
    let summary = Summary {
        format_version: SUMMARY_FORMAT_VERSION,
        config,
        runs: out
            .runs
            .iter()
            .zip(&stripped)
            .map(|(r, report)| SeedReport { seed: r.seed, report })
            .collect(),
        aggregate: &out.aggregate,
    };
    let path = dir.join("summary.json");
    written.push(path.clone());
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

/// Writes `intervals_seed{S}.csv` per seed and `summary.json`. On failure
/// every file written so far is removed.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    let mut written = Vec::new();
    write_all(dir, config, out, &mut written).inspect_err(|_| {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    })
}
