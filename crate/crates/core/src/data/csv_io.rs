//! CSV input and output for survival datasets.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{SurvivalDataset, SurvivalRecord};
use crate::error::{Error, Result};

/// Maps CSV columns onto the fields of a [`SurvivalRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    /// Identifier column; row numbers are used when absent.
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default = "default_time")]
    pub time: String,
    #[serde(default = "default_event")]
    pub event: String,
    /// Covariate columns in order; every remaining column when absent.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    /// Text-valued ordinal columns: each listed level maps to its position.
    #[serde(default)]
    pub ordinal: BTreeMap<String, Vec<String>>,
    /// Multiplier applied to the time column (e.g. days to years).
    #[serde(default = "default_scale")]
    pub time_scale: f64,
}

fn default_time() -> String {
    "time".into()
}
fn default_event() -> String {
    "event".into()
}
fn default_scale() -> f64 {
    1.0
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            id: Some("id".into()),
            time: default_time(),
            event: default_event(),
            covariates: None,
            ordinal: BTreeMap::new(),
            time_scale: 1.0,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<SurvivalDataset> {
    let file = File::open(path.as_ref())?;
    read_dataset(file, schema)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::invalid(format!("missing column '{name}'")))
}

fn parse_value(raw: &str, row: usize, name: &str, ordinal: Option<&Vec<String>>) -> Result<f64> {
    let raw = raw.trim();
    if let Some(levels) = ordinal {
        return levels
            .iter()
            .position(|l| l == raw)
            .map(|p| p as f64)
            .ok_or_else(|| Error::row(row, format!("column '{name}': unknown level '{raw}'")));
    }
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::row(row, format!("column '{name}': non-numeric value '{raw}'")))
}

pub fn read_dataset<R: Read>(reader: R, schema: &ColumnSchema) -> Result<SurvivalDataset> {
    if !(schema.time_scale.is_finite() && schema.time_scale > 0.0) {
        return Err(Error::invalid("time_scale must be positive"));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = schema.id.as_deref().map(|c| column(&headers, c)).transpose()?;
    let time_col = column(&headers, &schema.time)?;
    let event_col = column(&headers, &schema.event)?;
    let names: Vec<String> = match &schema.covariates {
        Some(list) => list.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != id_col && *i != time_col && *i != event_col)
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let cov_cols = names.iter().map(|n| column(&headers, n)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = result?;
        let id = match id_col {
            Some(c) => rec.get(c).unwrap_or("").to_string(),
            None => row.to_string(),
        };
        let time = parse_value(rec.get(time_col).unwrap_or(""), row, &schema.time, None)? * schema.time_scale;
        let event = match parse_value(rec.get(event_col).unwrap_or(""), row, &schema.event, None)? {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => return Err(Error::row(row, format!("event indicator must be 0 or 1, got {v}"))),
        };
        let covariates = cov_cols
            .iter()
            .zip(&names)
            .map(|(&c, n)| parse_value(rec.get(c).unwrap_or(""), row, n, schema.ordinal.get(n)))
            .collect::<Result<Vec<_>>>()?;
        records.push(SurvivalRecord { id, time, event, covariates });
    }
    SurvivalDataset::new(records, names)
}

/// Reads a covariate-only file for prediction. Returns ids (row numbers when
/// `id_column` is absent from the file) and covariate rows ordered as `names`.
pub fn read_covariates<R: Read>(
    reader: R,
    names: &[String],
    id_column: Option<&str>,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = id_column.and_then(|c| headers.iter().position(|h| h == c));
    let cols = names.iter().map(|n| column(&headers, n)).collect::<Result<Vec<_>>>()?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = result?;
        ids.push(id_col.map_or_else(|| row.to_string(), |c| rec.get(c).unwrap_or("").to_string()));
        rows.push(
            cols.iter()
                .zip(names)
                .map(|(&c, n)| parse_value(rec.get(c).unwrap_or(""), row, n, None))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((ids, rows))
}

pub fn load_covariates(
    path: impl AsRef<Path>,
    names: &[String],
    id_column: Option<&str>,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    read_covariates(File::open(path.as_ref())?, names, id_column)
}

/// Writes `id,time,event,<covariates...>`, readable with the default schema.
pub fn write_dataset<W: Write>(writer: W, data: &SurvivalDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "time".into(), "event".into()];
    header.extend(data.covariate_names().iter().cloned());
    w.write_record(&header)?;
    for r in data.records() {
        let mut fields = vec![r.id.clone(), r.time.to_string(), u8::from(r.event).to_string()];
        fields.extend(r.covariates.iter().map(|v| v.to_string()));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
