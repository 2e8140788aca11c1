//! Config-driven experiment runner.

pub mod config;
pub mod presets;
mod runner;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use config::{parse, CheckSpec, Experiment, ExperimentConfig, CONFIG_SCHEMA};
pub use runner::{run_experiment, CheckOutcome, Environment, RunReport, REPORT_SCHEMA};

use crate::inequalities::InequalityReport;

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "SEMIGROUP_LAB_OUT";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("enumeration budget exceeded: {0}")]
    Budget(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] crate::error::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Budget(_) => EXIT_BUDGET,
            Self::Io(_) => EXIT_RUNTIME,
            Self::Numeric(crate::error::Error::BudgetExceeded { .. }) => EXIT_BUDGET,
            Self::Numeric(_) => EXIT_RUNTIME,
        }
    }
}

/// Files written by [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.report.overall_pass {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

/// Reads a config file, or a bundled preset when `source` names one and no
/// such file exists.
pub fn load_config(source: &str) -> Result<ExperimentConfig, CliError> {
    let path = Path::new(source);
    if !path.exists() {
        if let Some(p) = presets::find(source) {
            return parse(p.json);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {source}: {e}")))?;
    parse(&text)
}

/// Validates, runs every check, and writes the JSON report and CSV table
/// into `out_dir`. Nothing is written if validation fails.
pub fn run(config: ExperimentConfig, out_dir: &Path) -> Result<RunOutput, CliError> {
    let experiment = Experiment::build(config)?;
    let report = run_experiment(&experiment)?;
    let stem = experiment.config.name.clone();
    let json_path = out_dir.join(experiment.config.output.json.clone().unwrap_or_else(|| format!("{stem}.json")));
    let csv_path = out_dir.join(experiment.config.output.csv.clone().unwrap_or_else(|| format!("{stem}.csv")));
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(|e| CliError::Io(format!("{}: {e}", json_path.display())))?;
    write_csv(&report, &csv_path)?;
    Ok(RunOutput { report, json_path, csv_path })
}

pub const CSV_HEADER: [&str; 8] = ["check", "name", "lhs", "rhs", "ratio", "threshold", "provenance", "pass"];

#[derive(Serialize)]
struct CsvRow<'a> {
    check: &'a str,
    name: &'a str,
    lhs: f64,
    rhs: f64,
    ratio: f64,
    threshold: Option<f64>,
    provenance: crate::inequalities::ThresholdProvenance,
    pass: bool,
}

fn write_csv(report: &RunReport, path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(io)?;
    w.write_record(CSV_HEADER).map_err(io)?;
    for check in &report.checks {
        for r in &check.records {
            let InequalityReport { name, lhs, rhs, ratio, threshold, provenance, pass } = r;
            w.serialize(CsvRow {
                check: &check.kind,
                name,
                lhs: *lhs,
                rhs: *rhs,
                ratio: *ratio,
                threshold: *threshold,
                provenance: *provenance,
                pass: *pass,
            })
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

/// `name  description` per bundled preset.
pub fn list_presets() -> String {
    presets::PRESETS.iter().map(|p| format!("{:<18}{}\n", p.name, p.description)).collect()
}
