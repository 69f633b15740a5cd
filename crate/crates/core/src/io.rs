//! Long-format CSV ingestion and export of balanced panels.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelData;

/// Which CSV columns hold the unit id, period, outcome and regressors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub unit: String,
    pub period: String,
    pub outcome: String,
    pub regressors: Vec<String>,
}

impl ColumnSchema {
    pub fn new(
        unit: impl Into<String>,
        period: impl Into<String>,
        outcome: impl Into<String>,
        regressors: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            unit: unit.into(),
            period: period.into(),
            outcome: outcome.into(),
            regressors: regressors.into_iter().map(Into::into).collect(),
        }
    }

    /// Schema matching what [`write_panel_csv`] emits.
    pub fn for_panel(panel: &PanelData) -> Self {
        Self::new(
            "unit",
            "period",
            "y",
            (0..panel.n_regressors()).map(|j| panel.regressor_label(j)),
        )
    }
}

pub fn load_panel_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<PanelData> {
    let file = std::fs::File::open(path)?;
    read_panel_csv(file, schema)
}

/// Reads a long-format panel. Units are sorted by id; periods ascending,
/// numerically when every period parses as a number.
pub fn read_panel_csv<R: Read>(reader: R, schema: &ColumnSchema) -> Result<PanelData> {
    if schema.regressors.is_empty() {
        return Err(Error::InvalidConfig("at least one regressor column is required".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let unit_col = col(&schema.unit)?;
    let period_col = col(&schema.period)?;
    let outcome_col = col(&schema.outcome)?;
    let reg_cols = schema
        .regressors
        .iter()
        .map(|r| col(r))
        .collect::<Result<Vec<_>>>()?;
    let p = reg_cols.len();

    struct Obs {
        y: f64,
        x: Vec<f64>,
    }
    let mut cells: HashMap<(String, String), Obs> = HashMap::new();
    let mut units = BTreeSet::new();
    let mut periods = BTreeSet::new();

    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        // header is row 1
        let row = idx + 2;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let number = |c: usize, name: &str| -> Result<f64> {
            let raw = field(c);
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: name.to_string(),
                });
            }
            Ok(v)
        };
        let unit = field(unit_col).to_string();
        let period = field(period_col).to_string();
        let y = number(outcome_col, &schema.outcome)?;
        let x = reg_cols
            .iter()
            .zip(&schema.regressors)
            .map(|(&c, name)| number(c, name))
            .collect::<Result<Vec<_>>>()?;
        units.insert(unit.clone());
        periods.insert(period.clone());
        if cells.contains_key(&(unit.clone(), period.clone())) {
            return Err(Error::Duplicate { unit, period, row });
        }
        cells.insert((unit, period), Obs { y, x });
    }

    if cells.is_empty() {
        return Err(Error::Dimension("CSV contains no observations".into()));
    }

    let units: Vec<String> = units.into_iter().collect();
    let periods = sort_periods(periods.into_iter().collect());
    let (n, t) = (units.len(), periods.len());
    let mut y = Vec::with_capacity(n * t);
    let mut x = Vec::with_capacity(n * t * p);
    for unit in &units {
        for period in &periods {
            let key = (unit.clone(), period.clone());
            let obs = cells.get(&key).ok_or_else(|| Error::Unbalanced {
                unit: unit.clone(),
                period: period.clone(),
            })?;
            y.push(obs.y);
            x.extend_from_slice(&obs.x);
        }
    }
    PanelData::new(n, t, p, y, x)?
        .with_unit_ids(units)?
        .with_period_ids(periods)?
        .with_regressor_names(schema.regressors.clone())
}

fn sort_periods(mut periods: Vec<String>) -> Vec<String> {
    let numeric: Option<Vec<f64>> = periods.iter().map(|p| p.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut pairs: Vec<(f64, String)> = values.into_iter().zip(periods).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        pairs.into_iter().map(|(_, p)| p).collect()
    } else {
        periods.sort();
        periods
    }
}

/// Writes the panel in long format: `unit,period,y,<regressors...>`.
///
/// Values use Rust's shortest round-trip float formatting, so reading the
/// file back reproduces every value bit for bit.
pub fn write_panel_csv<W: Write>(writer: W, panel: &PanelData) -> Result<()> {
    write_panel_csv_as(writer, panel, &ColumnSchema::for_panel(panel))
}

/// As [`write_panel_csv`] with the column names taken from `schema`.
pub fn write_panel_csv_as<W: Write>(writer: W, panel: &PanelData, schema: &ColumnSchema) -> Result<()> {
    if schema.regressors.len() != panel.n_regressors() {
        return Err(Error::Dimension(format!(
            "schema names {} regressors, panel has {}",
            schema.regressors.len(),
            panel.n_regressors()
        )));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![schema.unit.clone(), schema.period.clone(), schema.outcome.clone()];
    header.extend(schema.regressors.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..panel.n_units() {
        let unit = panel.unit_label(i);
        for t in 0..panel.n_periods() {
            let mut rec = vec![unit.clone(), panel.period_label(t), fmt_f64(panel.y(i, t))];
            rec.extend(panel.x_row(i, t).iter().map(|&v| fmt_f64(v)));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_panel_csv(path: impl AsRef<Path>, panel: &PanelData) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_panel_csv(std::io::BufWriter::new(file), panel)
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
