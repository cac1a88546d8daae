//! Estimation runs over covariate cells and their machine-readable outputs.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use super::input::Columns;
use crate::data::{build_cells, CellStatus, CovariateCode, Dataset, Mode};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, TauGrid};
use crate::inference::{bootstrap_cells, bootstrap_process, BootstrapConfig, InferenceReport};

pub const REPORT_SCHEMA: &str = "qdid.report.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

/// Fully resolved settings of an estimation run; echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub input: Option<PathBuf>,
    pub columns: Columns,
    pub grid: TauGrid,
    pub bootstrap: BootstrapConfig,
    pub estimators: Vec<Estimator>,
    pub unconditional: bool,
    pub format: OutputFormat,
    pub min_cell_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Panel,
            input: None,
            columns: Columns::default(),
            grid: TauGrid::default(),
            bootstrap: BootstrapConfig::default(),
            estimators: vec![Estimator::Ddid],
            unconditional: false,
            format: OutputFormat::Json,
            min_cell_size: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub estimator: Estimator,
    #[serde(flatten)]
    pub inference: InferenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCell {
    pub cell: CovariateCode,
    pub n_control: usize,
    pub n_treated: usize,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub schema: &'static str,
    pub config: RunConfig,
    pub n: usize,
    /// Ordered by estimator, then covariate code.
    pub cells: Vec<CellReport>,
    pub unconditional: Option<InferenceReport>,
    pub skipped: Vec<SkippedCell>,
}

/// Estimates, tests and bands every viable cell, plus the pooled effect when
/// requested. Bootstrap streams are keyed by the position of a cell among
/// the viable cells.
pub fn run_estimation(config: &RunConfig, dataset: &Dataset) -> Result<EstimationReport> {
    config.bootstrap.validate()?;
    if config.estimators.is_empty() {
        return Err(Error::Config("no estimators selected".into()));
    }
    if dataset.mode() != config.mode {
        return Err(Error::Config("dataset mode does not match configuration".into()));
    }
    let cells = build_cells(dataset, config.min_cell_size)?;
    let mut skipped = Vec::new();
    let mut samples = Vec::new();
    for cell in &cells {
        match &cell.status {
            CellStatus::Viable => samples.push(dataset.cell_sample(cell)),
            CellStatus::Undersized(reasons) => skipped.push(SkippedCell {
                cell: cell.code.clone(),
                n_control: cell.n_control(),
                n_treated: cell.n_treated(),
                reasons: reasons.clone(),
            }),
        }
    }
    if samples.is_empty() {
        let detail = skipped
            .iter()
            .map(|s| format!("{:?}: {}", s.cell, s.reasons.join(", ")))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Infeasible(format!("no viable covariate cells ({detail})")));
    }
    let n = dataset.len();
    let grid = &config.grid;
    let boot = &config.bootstrap;

    let mut reports = Vec::new();
    let mut unconditional = None;
    for &estimator in &config.estimators {
        match estimator {
            Estimator::Ddid => {
                let (draws, pooled) = bootstrap_cells(&samples, grid, n, boot, config.unconditional)?;
                for (sample, d) in samples.iter().zip(&draws) {
                    let process = estimator.estimate(sample, None, grid, n)?;
                    reports.push(CellReport {
                        estimator,
                        inference: InferenceReport::from_draws(&process, d, boot)?,
                    });
                }
                if let Some(pooled) = pooled {
                    let results = samples
                        .iter()
                        .map(|s| crate::estimators::counterfactual_cdf(s, None))
                        .collect::<Result<Vec<_>>>()?;
                    let shares = crate::estimators::treated_shares(&results);
                    let process = crate::estimators::unconditional_qtt(&results, &shares, grid, n)?;
                    unconditional = Some(InferenceReport::from_draws(&process, &pooled, boot)?);
                }
            }
            Estimator::Cic => {
                for (c, sample) in samples.iter().enumerate() {
                    let process = estimator.estimate(sample, None, grid, n)?;
                    let draws = bootstrap_process(sample, estimator, grid, n, boot, c as u64)?;
                    reports.push(CellReport {
                        estimator,
                        inference: InferenceReport::from_draws(&process, &draws, boot)?,
                    });
                }
            }
        }
    }
    Ok(EstimationReport {
        schema: REPORT_SCHEMA,
        config: config.clone(),
        n,
        cells: reports,
        unconditional,
        skipped,
    })
}

/// `1:0:2` for a covariate code, `all` for the pooled effect (and for the
/// empty code of covariate-free data).
pub fn cell_label(code: Option<&CovariateCode>) -> String {
    match code {
        Some(c) if !c.is_empty() => c.iter().map(i64::to_string).collect::<Vec<_>>().join(":"),
        _ => "all".into(),
    }
}

pub fn to_json(report: &EstimationReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

fn push_opt(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        let _ = write!(out, "{v}");
    }
}

fn all_processes(report: &EstimationReport) -> impl Iterator<Item = (&'static str, &InferenceReport, String)> {
    report
        .cells
        .iter()
        .map(|c| (c.estimator.label(), &c.inference, cell_label(c.inference.cell.as_ref())))
        .chain(
            report
                .unconditional
                .iter()
                .map(|u| ("DDID", u, "pooled".to_string())),
        )
}

/// One row per (estimator, cell, tau): estimate, uniform band and pointwise
/// standard error, with the cell's KS result repeated on each row. Numbers
/// use the shortest representation that round-trips, as in the JSON output.
pub fn to_csv(report: &EstimationReport) -> String {
    let mut out = String::from(
        "estimator,cell,tau,estimate,lower,upper,se,ks_statistic,critical_value,reject,n_control,n_treated,n\n",
    );
    for (label, r, cell) in all_processes(report) {
        for k in 0..r.taus.len() {
            let _ = write!(
                out,
                "{label},{cell},{},{},{},{}",
                r.taus[k], r.estimate[k], r.lower[k], r.upper[k]
            );
            push_opt(&mut out, r.se.as_ref().map(|s| s[k]));
            let _ = writeln!(
                out,
                ",{},{},{},{},{},{}",
                r.ks.statistic, r.ks.critical_value, r.ks.reject, r.n_control, r.n_treated, r.n
            );
        }
    }
    out
}

/// Per-cell summary: KS decision plus estimates and standard errors at the
/// requested levels (blank when a level is not on the grid).
pub fn summary_csv(report: &EstimationReport, levels: &[f64]) -> String {
    let mut out = String::from("estimator,cell,n_control,n_treated,reject");
    for t in levels {
        let _ = write!(out, ",qtt_{t},se_{t}");
    }
    out.push('\n');
    for (label, r, cell) in all_processes(report) {
        let _ = write!(out, "{label},{cell},{},{},{}", r.n_control, r.n_treated, r.ks.reject);
        for &t in levels {
            let k = r.taus.iter().position(|x| (x - t).abs() < 1e-9);
            push_opt(&mut out, k.map(|k| r.estimate[k]));
            push_opt(&mut out, k.and_then(|k| r.se.as_ref().map(|s| s[k])));
        }
        out.push('\n');
    }
    out
}
