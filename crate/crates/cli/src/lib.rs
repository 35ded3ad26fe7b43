//! Declarative experiment runner behind the `ivory` command.
//!
//! A run reads one JSON config, evaluates a list of checks and writes a
//! table (`<command>.csv` or `<command>.json`), an optional SVG figure and
//! `report.json` into the output directory.

pub mod commands;
pub mod svg;

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use svg::{render_svg, Scene, SvgError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] ivory::Error),
    #[error(transparent)]
    Svg(#[from] SvgError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit status. A failed check exits with 1 and is not an error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    IvoryCheck,
    BilliardOrbit,
    PonceletGrid,
    InscribedCircles,
    Geodesic,
    StaeckelIvory,
    StaeckelBilliard,
    PotentialScan,
    NewtonCheck,
    ArnoldCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::IvoryCheck => "ivory-check",
            Command::BilliardOrbit => "billiard-orbit",
            Command::PonceletGrid => "poncelet-grid",
            Command::InscribedCircles => "inscribed-circles",
            Command::Geodesic => "geodesic",
            Command::StaeckelIvory => "staeckel-ivory",
            Command::StaeckelBilliard => "staeckel-billiard",
            Command::PotentialScan => "potential-scan",
            Command::NewtonCheck => "newton-check",
            Command::ArnoldCheck => "arnold-check",
        }
    }

    /// Commands that draw random numbers and therefore need a seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Command::NewtonCheck | Command::ArnoldCheck)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One JSON document describing a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Overrides the tolerance of every deterministic check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Monte Carlo sample count `N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Output directory; `--out` takes precedence. Not echoed in the report.
    #[serde(default, skip_serializing)]
    pub out: Option<String>,
    #[serde(default)]
    pub params: Value,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    /// Command-specific parameters with defaults filled in.
    pub fn params<P: for<'de> Deserialize<'de> + Default>(&self) -> Result<P, CliError> {
        match &self.params {
            Value::Null => Ok(P::default()),
            v => {
                serde_json::from_value(v.clone()).map_err(|e| config_error(format!("params: {e}")))
            }
        }
    }

    pub fn tol(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| config_error("seed is required for this command"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `measured ≤ tolerance`; a NaN never passes.
    pub fn below(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        }
    }

    /// A yes/no check, recorded as `0` on success and `1` on failure.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::below(name, if ok { 0.0 } else { 1.0 }, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Floats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Num(v) => format_float(*v),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => s.clone(),
            }))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let rows: Vec<serde_json::Map<String, Value>> =
            self.rows
                .iter()
                .map(|row| {
                    self.header
                        .iter()
                        .zip(row)
                        .map(|(k, c)| {
                            let v = match c {
                                Cell::Num(v) => serde_json::Number::from_f64(*v)
                                    .map_or(Value::Null, Value::Number),
                                Cell::Int(v) => Value::from(*v),
                                Cell::Text(s) => Value::from(s.as_str()),
                            };
                            (k.clone(), v)
                        })
                        .collect()
                })
                .collect();
        Ok(serde_json::to_string_pretty(&rows)? + "\n")
    }
}

/// What a command produces before anything is written.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub params: Value,
    pub checks: Vec<Check>,
    pub table: Table,
    pub scene: Option<Scene>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: Command,
    /// Effective config, defaults included. Rerunning it reproduces the run.
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub pass: bool,
}

/// Files of a run, in write order.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub files: Vec<(String, String)>,
    /// Wall-clock times per phase. Kept out of the report so that reports
    /// are reproducible byte for byte.
    pub timings: Vec<(&'static str, Duration)>,
}

pub fn run(command: Command, config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    if let Some(c) = config.command {
        if c != command {
            return Err(config_error(format!(
                "config is for {}, not {}",
                c.name(),
                command.name()
            )));
        }
    }
    if command.is_stochastic() {
        config.require_seed()?;
    }
    if let Some(t) = config.tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(config_error(format!("tolerance must be positive, got {t}")));
        }
    }
    let t0 = Instant::now();
    let outcome = commands::execute(command, config)?;
    let t1 = Instant::now();
    let format = config.format.unwrap_or_default();
    let name = command.name();
    let mut files = Vec::new();
    match format {
        Format::Csv => files.push((format!("{name}.csv"), outcome.table.to_csv()?)),
        Format::Json => files.push((format!("{name}.json"), outcome.table.to_json()?)),
    }
    if config.svg.unwrap_or(true) {
        if let Some(scene) = &outcome.scene {
            files.push((format!("{name}.svg"), render_svg(scene)?));
        }
    }
    let mut echo = config.clone();
    echo.command = Some(command);
    echo.format = Some(format);
    echo.params = outcome.params;
    let pass = outcome.checks.iter().all(|c| c.pass);
    let mut artifacts: Vec<String> = files.iter().map(|f| f.0.clone()).collect();
    artifacts.push("report.json".into());
    let report = RunReport {
        command,
        config: echo,
        checks: outcome.checks,
        artifacts,
        pass,
    };
    files.push((
        "report.json".into(),
        serde_json::to_string_pretty(&report)? + "\n",
    ));
    let timings = vec![("compute", t1 - t0), ("render", t1.elapsed())];
    Ok(RunOutput {
        report,
        files,
        timings,
    })
}

/// Writes every file of `output` into `dir`, creating it if needed.
pub fn write_output(output: &RunOutput, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in &output.files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}
