//! Long-format CSV ingestion.
//!
//! One row per (unit, period) observation: a unit identifier, a period code
//! (0 = pre, 1 = post), the outcome, a 0/1 treatment-group indicator and one
//! integer column per covariate. Panel inputs are pivoted to one record per
//! unit; cross-section inputs are kept row by row and need no unit column.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::StringRecord;

use crate::data::{Dataset, Mode, PanelDataset, PanelUnit, Period, RcsDataset, RcsObservation};
use crate::error::{Error, Result};

/// Column names of the long-format file.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Columns {
    pub unit: String,
    pub period: String,
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            unit: "unit_id".into(),
            period: "period".into(),
            outcome: "y".into(),
            treatment: "treated".into(),
            covariates: Vec::new(),
        }
    }
}

struct Layout {
    unit: Option<usize>,
    period: usize,
    outcome: usize,
    treatment: usize,
    covariates: Vec<usize>,
}

fn locate(headers: &StringRecord, columns: &Columns, mode: Mode) -> Result<Layout> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::Input {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let unit = match mode {
        Mode::Panel => Some(require(&columns.unit)?),
        Mode::Rcs => find(&columns.unit),
    };
    Ok(Layout {
        unit,
        period: require(&columns.period)?,
        outcome: require(&columns.outcome)?,
        treatment: require(&columns.treatment)?,
        covariates: columns
            .covariates
            .iter()
            .map(|c| require(c))
            .collect::<Result<_>>()?,
    })
}

fn field<'r>(record: &'r StringRecord, index: usize, line: u64) -> Result<&'r str> {
    record.get(index).map(str::trim).ok_or_else(|| Error::Input {
        line,
        message: format!("row has no column {}", index + 1),
    })
}

fn parse_outcome(raw: &str, line: u64) -> Result<f64> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Input {
            line,
            message: format!("outcome `{raw}` is not a finite number"),
        }),
    }
}

fn parse_flag(raw: &str, what: &str, line: u64) -> Result<bool> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Input {
            line,
            message: format!("{what} must be 0 or 1, got `{raw}`"),
        }),
    }
}

fn parse_covariate(raw: &str, name: &str, line: u64) -> Result<i64> {
    raw.parse::<i64>().map_err(|_| Error::Input {
        line,
        message: format!("covariate `{name}` must be an integer category code, got `{raw}`"),
    })
}

struct Row {
    line: u64,
    unit: Option<String>,
    period: Period,
    y: f64,
    treated: bool,
    covariates: Vec<i64>,
}

fn parse_rows<R: Read>(reader: R, columns: &Columns, mode: Mode) -> Result<Vec<Row>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let layout = locate(csv.headers()?, columns, mode)?;
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let period = if parse_flag(field(&record, layout.period, line)?, "period", line)? {
            Period::Post
        } else {
            Period::Pre
        };
        rows.push(Row {
            line,
            unit: layout
                .unit
                .map(|i| field(&record, i, line).map(str::to_owned))
                .transpose()?,
            period,
            y: parse_outcome(field(&record, layout.outcome, line)?, line)?,
            treated: parse_flag(field(&record, layout.treatment, line)?, "treatment", line)?,
            covariates: layout
                .covariates
                .iter()
                .zip(&columns.covariates)
                .map(|(&i, name)| parse_covariate(field(&record, i, line)?, name, line))
                .collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

fn pivot_panel(rows: Vec<Row>) -> Result<PanelDataset> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut units: Vec<(PanelUnit, u64, usize)> = Vec::new();
    for row in rows {
        let id = row.unit.clone().unwrap_or_default();
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            units.push((
                PanelUnit {
                    unit_id: id.clone(),
                    y_pre: None,
                    y_post: None,
                    treated: row.treated,
                    covariates: row.covariates.clone(),
                },
                row.line,
                0,
            ));
            units.len() - 1
        });
        let (unit, _, seen) = &mut units[slot];
        *seen += 1;
        if unit.treated != row.treated || unit.covariates != row.covariates {
            return Err(Error::Input {
                line: row.line,
                message: format!("unit `{id}` changes treatment group or covariates between periods"),
            });
        }
        let target = match row.period {
            Period::Pre => &mut unit.y_pre,
            Period::Post => &mut unit.y_post,
        };
        if target.is_some() {
            return Err(Error::Input {
                line: row.line,
                message: format!("unit `{id}` has more than one {:?} row", row.period),
            });
        }
        *target = Some(row.y);
    }
    for (unit, line, seen) in &units {
        if *seen != 2 {
            return Err(Error::Input {
                line: *line,
                message: format!("unit `{}` has {seen} period(s), expected 2", unit.unit_id),
            });
        }
    }
    Ok(PanelDataset::new(units.into_iter().map(|u| u.0).collect()))
}

/// Parses a long-format CSV from any reader.
pub fn read_dataset<R: Read>(reader: R, columns: &Columns, mode: Mode) -> Result<Dataset> {
    let rows = parse_rows(reader, columns, mode)?;
    let dataset = match mode {
        Mode::Panel => Dataset::Panel(pivot_panel(rows)?),
        Mode::Rcs => Dataset::Rcs(RcsDataset::new(
            rows.into_iter()
                .map(|r| RcsObservation {
                    unit_id: r.unit,
                    y: r.y,
                    period: r.period,
                    treated: r.treated,
                    covariates: r.covariates,
                })
                .collect(),
        )),
    };
    Ok(dataset)
}

pub fn load_csv(path: &Path, columns: &Columns, mode: Mode) -> Result<Dataset> {
    read_dataset(File::open(path)?, columns, mode)
}

/// Writes a panel in the long format read by [`read_dataset`] with default
/// column names (covariates as `x1`, `x2`, ...).
pub fn write_panel_csv<W: Write>(dataset: &PanelDataset, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let arity = dataset.units.first().map_or(0, |u| u.covariates.len());
    let mut header = vec!["unit_id".to_string(), "period".into(), "y".into(), "treated".into()];
    header.extend((1..=arity).map(|k| format!("x{k}")));
    out.write_record(&header)?;
    for unit in &dataset.units {
        for (period, y) in [("0", unit.y_pre), ("1", unit.y_post)] {
            let Some(y) = y else { continue };
            let mut record = vec![
                unit.unit_id.clone(),
                period.to_string(),
                y.to_string(),
                u8::from(unit.treated).to_string(),
            ];
            record.extend(unit.covariates.iter().map(|c| c.to_string()));
            out.write_record(&record)?;
        }
    }
    out.flush()?;
    Ok(())
}
