//! Datasets, validation and covariate cells.
//!
//! Two input shapes are supported: a two-period panel (one row per unit
//! holding both outcomes) and repeated cross sections (one row per
//! observation with a period tag). Covariates are small integer category
//! codes; estimation runs separately inside each distinct code vector.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact covariate vector identifying a cell.
pub type CovariateCode = Vec<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Panel,
    Rcs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Pre,
    Post,
}

/// One unit of a two-period panel. Outcomes are optional only so that an
/// incomplete unit can be represented and reported by [`PanelDataset::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct PanelUnit {
    pub unit_id: String,
    pub y_pre: Option<f64>,
    pub y_post: Option<f64>,
    pub treated: bool,
    pub covariates: Vec<i64>,
}

impl PanelUnit {
    pub fn new(
        unit_id: impl Into<String>,
        y_pre: f64,
        y_post: f64,
        treated: bool,
        covariates: Vec<i64>,
    ) -> Self {
        Self {
            unit_id: unit_id.into(),
            y_pre: Some(y_pre),
            y_post: Some(y_post),
            treated,
            covariates,
        }
    }
}

/// One observation of a repeated cross section.
#[derive(Debug, Clone, PartialEq)]
pub struct RcsObservation {
    pub unit_id: Option<String>,
    pub y: f64,
    pub period: Period,
    pub treated: bool,
    pub covariates: Vec<i64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelDataset {
    pub units: Vec<PanelUnit>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RcsDataset {
    pub observations: Vec<RcsObservation>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Panel(PanelDataset),
    Rcs(RcsDataset),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationIssue {
    NonFiniteOutcome { row: usize },
    ArityMismatch { row: usize, expected: usize, found: usize },
    MissingPeriod { row: usize, unit: String, period: Period },
    DuplicateUnitPeriod { row: usize, unit: String, period: Period },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFiniteOutcome { row } => write!(f, "row {row}: non-finite outcome"),
            Self::ArityMismatch {
                row,
                expected,
                found,
            } => write!(f, "row {row}: {found} covariates, expected {expected}"),
            Self::MissingPeriod { row, unit, period } => {
                write!(f, "row {row}: unit {unit} has no {period:?} outcome")
            }
            Self::DuplicateUnitPeriod { row, unit, period } => {
                write!(f, "row {row}: duplicate {period:?} observation for unit {unit}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_clean() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

fn check_arity(issues: &mut Vec<ValidationIssue>, rows: impl Iterator<Item = usize>) {
    let mut expected = None;
    for (row, arity) in rows.enumerate() {
        match expected {
            None => expected = Some(arity),
            Some(e) if e != arity => issues.push(ValidationIssue::ArityMismatch {
                row,
                expected: e,
                found: arity,
            }),
            _ => {}
        }
    }
}

impl PanelDataset {
    pub fn new(units: Vec<PanelUnit>) -> Self {
        Self { units }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        for (row, u) in self.units.iter().enumerate() {
            for (value, period) in [(u.y_pre, Period::Pre), (u.y_post, Period::Post)] {
                match value {
                    None => issues.push(ValidationIssue::MissingPeriod {
                        row,
                        unit: u.unit_id.clone(),
                        period,
                    }),
                    Some(v) if !v.is_finite() => {
                        issues.push(ValidationIssue::NonFiniteOutcome { row })
                    }
                    _ => {}
                }
            }
        }
        check_arity(&mut issues, self.units.iter().map(|u| u.covariates.len()));
        ValidationReport { issues }
    }
}

impl RcsDataset {
    pub fn new(observations: Vec<RcsObservation>) -> Self {
        Self { observations }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let mut seen = HashSet::new();
        for (row, o) in self.observations.iter().enumerate() {
            if !o.y.is_finite() {
                issues.push(ValidationIssue::NonFiniteOutcome { row });
            }
            if let Some(id) = &o.unit_id {
                if !seen.insert((id.as_str(), o.period)) {
                    issues.push(ValidationIssue::DuplicateUnitPeriod {
                        row,
                        unit: id.clone(),
                        period: o.period,
                    });
                }
            }
        }
        check_arity(&mut issues, self.observations.iter().map(|o| o.covariates.len()));
        ValidationReport { issues }
    }
}

impl Dataset {
    pub fn mode(&self) -> Mode {
        match self {
            Dataset::Panel(_) => Mode::Panel,
            Dataset::Rcs(_) => Mode::Rcs,
        }
    }

    /// Row count: units for a panel, observations for cross sections.
    pub fn len(&self) -> usize {
        match self {
            Dataset::Panel(p) => p.units.len(),
            Dataset::Rcs(r) => r.observations.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> ValidationReport {
        match self {
            Dataset::Panel(p) => p.validate(),
            Dataset::Rcs(r) => r.validate(),
        }
    }

    fn row_key(&self, row: usize) -> (&[i64], bool) {
        match self {
            Dataset::Panel(p) => (&p.units[row].covariates, p.units[row].treated),
            Dataset::Rcs(r) => (&r.observations[row].covariates, r.observations[row].treated),
        }
    }

    /// Outcome samples for one cell, split by arm and period.
    pub fn cell_sample(&self, cell: &CovariateCell) -> CellSample {
        match self {
            Dataset::Panel(p) => {
                let pre = |i: &usize| p.units[*i].y_pre.unwrap_or(f64::NAN);
                let post = |i: &usize| p.units[*i].y_post.unwrap_or(f64::NAN);
                CellSample {
                    code: cell.code.clone(),
                    mode: Mode::Panel,
                    control_pre: cell.control.iter().map(pre).collect(),
                    control_post: cell.control.iter().map(post).collect(),
                    treated_pre: cell.treated.iter().map(pre).collect(),
                    treated_post: cell.treated.iter().map(post).collect(),
                }
            }
            Dataset::Rcs(r) => {
                let split = |rows: &[usize], period: Period| -> Vec<f64> {
                    rows.iter()
                        .map(|&i| &r.observations[i])
                        .filter(|o| o.period == period)
                        .map(|o| o.y)
                        .collect()
                };
                CellSample {
                    code: cell.code.clone(),
                    mode: Mode::Rcs,
                    control_pre: split(&cell.control, Period::Pre),
                    control_post: split(&cell.control, Period::Post),
                    treated_pre: split(&cell.treated, Period::Pre),
                    treated_post: split(&cell.treated, Period::Post),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "reasons", rename_all = "snake_case")]
pub enum CellStatus {
    Viable,
    Undersized(Vec<String>),
}

/// Rows sharing one covariate code, split into treated and control members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateCell {
    pub code: CovariateCode,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
    pub status: CellStatus,
}

impl CovariateCell {
    pub fn n_treated(&self) -> usize {
        self.treated.len()
    }

    pub fn n_control(&self) -> usize {
        self.control.len()
    }

    pub fn is_viable(&self) -> bool {
        self.status == CellStatus::Viable
    }
}

/// Partitions the dataset by exact covariate code, ordered lexicographically.
/// Cells with an arm (or, for cross sections, an arm-period sample) smaller
/// than `min_cell_size` are kept but marked [`CellStatus::Undersized`].
pub fn build_cells(dataset: &Dataset, min_cell_size: usize) -> Result<Vec<CovariateCell>> {
    dataset.validate().into_result()?;
    let mut groups: BTreeMap<&[i64], (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for row in 0..dataset.len() {
        let (code, treated) = dataset.row_key(row);
        let entry = groups.entry(code).or_default();
        if treated {
            entry.0.push(row);
        } else {
            entry.1.push(row);
        }
    }
    let cells = groups
        .into_iter()
        .map(|(code, (treated, control))| {
            let mut cell = CovariateCell {
                code: code.to_vec(),
                treated,
                control,
                status: CellStatus::Viable,
            };
            let sample = dataset.cell_sample(&cell);
            let reasons = sample.size_problems(min_cell_size);
            if !reasons.is_empty() {
                cell.status = CellStatus::Undersized(reasons);
            }
            cell
        })
        .collect();
    Ok(cells)
}

/// Outcomes of one cell. In panel mode `control_pre[i]` and `control_post[i]`
/// belong to the same unit (likewise for the treated arm); in cross-section
/// mode the four samples are unrelated.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSample {
    pub code: CovariateCode,
    pub mode: Mode,
    pub control_pre: Vec<f64>,
    pub control_post: Vec<f64>,
    pub treated_pre: Vec<f64>,
    pub treated_post: Vec<f64>,
}

impl CellSample {
    /// Panel cell from paired (pre, post) outcomes per unit.
    pub fn panel(
        code: CovariateCode,
        control: &[(f64, f64)],
        treated: &[(f64, f64)],
    ) -> Self {
        Self {
            code,
            mode: Mode::Panel,
            control_pre: control.iter().map(|p| p.0).collect(),
            control_post: control.iter().map(|p| p.1).collect(),
            treated_pre: treated.iter().map(|p| p.0).collect(),
            treated_post: treated.iter().map(|p| p.1).collect(),
        }
    }

    pub fn rcs(
        code: CovariateCode,
        control_pre: Vec<f64>,
        control_post: Vec<f64>,
        treated_pre: Vec<f64>,
        treated_post: Vec<f64>,
    ) -> Self {
        Self {
            code,
            mode: Mode::Rcs,
            control_pre,
            control_post,
            treated_pre,
            treated_post,
        }
    }

    pub fn n_control(&self) -> usize {
        match self.mode {
            Mode::Panel => self.control_pre.len(),
            Mode::Rcs => self.control_pre.len() + self.control_post.len(),
        }
    }

    pub fn n_treated(&self) -> usize {
        match self.mode {
            Mode::Panel => self.treated_pre.len(),
            Mode::Rcs => self.treated_pre.len() + self.treated_post.len(),
        }
    }

    pub fn size_problems(&self, min_cell_size: usize) -> Vec<String> {
        let arms: Vec<(&str, usize)> = match self.mode {
            Mode::Panel => vec![
                ("control", self.control_pre.len()),
                ("treated", self.treated_pre.len()),
            ],
            Mode::Rcs => vec![
                ("control pre", self.control_pre.len()),
                ("control post", self.control_post.len()),
                ("treated pre", self.treated_pre.len()),
                ("treated post", self.treated_post.len()),
            ],
        };
        arms.into_iter()
            .filter(|(_, n)| *n < min_cell_size.max(1))
            .map(|(arm, n)| {
                if n == 0 {
                    format!("no {arm} observations")
                } else {
                    format!("{arm} has {n} observations, need {min_cell_size}")
                }
            })
            .collect()
    }

    pub fn check_size(&self, min_cell_size: usize) -> Result<()> {
        let problems = self.size_problems(min_cell_size);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::UndersizedCell {
                cell: self.code.clone(),
                reason: problems.join(", "),
            })
        }
    }
}
