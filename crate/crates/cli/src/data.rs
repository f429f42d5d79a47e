//! Headered CSV input: locations, observations and optional binomial trials.

use std::path::Path;

use spmrf::Error;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub trials: Option<Vec<u64>>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Observations on the natural scale: counts, values or proportions.
    pub fn observed(&self) -> Vec<f64> {
        match &self.trials {
            Some(m) => self.y.iter().zip(m).map(|(y, &m)| y / m as f64).collect(),
            None => self.y.clone(),
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::config(format!("{}: no column named '{name}'", path.display())))
}

fn parse(field: &str, line: u64, name: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("line {line}: '{field}' in column '{name}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!("line {line}: non-finite value in column '{name}'")).into());
    }
    Ok(v)
}

/// Reads the named columns; `trials_col` is only read when given.
pub fn read_series(path: &Path, x_col: &str, y_col: &str, trials_col: Option<&str>) -> Result<Series> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let xi = column(&headers, x_col, path)?;
    let yi = column(&headers, y_col, path)?;
    let mi = trials_col.map(|c| column(&headers, c, path).map(|i| (i, c))).transpose()?;

    let mut series = Series { x: Vec::new(), y: Vec::new(), trials: mi.map(|_| Vec::new()) };
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        series.x.push(parse(&record[xi], line, x_col)?);
        series.y.push(parse(&record[yi], line, y_col)?);
        if let (Some((i, name)), Some(trials)) = (mi, series.trials.as_mut()) {
            let m = parse(&record[i], line, name)?;
            if m < 0.0 || m.fract() != 0.0 {
                return Err(Error::InvalidInput(format!("line {line}: trials must be a nonnegative integer, got {m}")).into());
            }
            trials.push(m as u64);
        }
    }
    if series.len() < 2 {
        return Err(Error::InvalidInput(format!("{}: at least two rows are needed", path.display())).into());
    }
    Ok(series)
}
