//! Wide-format indicator tables and the cleaned, year-aligned panels built
//! from them.
//!
//! The input layout is one row per (country, indicator) with the annual
//! observations spread across 4-digit year columns:
//!
//! ```text
//! Country,Indicator,Code,1996,1997,1998
//! Oman,GDP (current US$),NY.GDP.MKTP.CD,1.2e10,..,1.4e10
//! ```
//!
//! Empty cells and the `..` sentinel are missing values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cell text that marks a missing observation besides the empty string.
pub const MISSING_SENTINEL: &str = "..";

/// Default upper bound on the fraction of missing years a predictor may have.
pub const DEFAULT_MAX_MISSING_FRACTION: f64 = 0.3;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("malformed record at row {row}: {message}")]
    Record { row: usize, message: String },
    #[error("invalid cell at row {row}, year {year}: {value:?} is not a number")]
    Cell {
        row: usize,
        year: i32,
        value: String,
    },
    #[error("indicator {code} appears more than once for {country}")]
    DuplicateIndicator { country: String, code: String },
    #[error("target {code} not found for {country}")]
    MissingTarget { country: String, code: String },
    #[error("target {code} for {country} is missing at the edge of {start}-{end}")]
    UnusableTarget {
        country: String,
        code: String,
        start: i32,
        end: i32,
    },
    #[error("requested years {start}-{end} do not overlap the table")]
    NoYears { start: i32, end: i32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series needs at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid series {id}: {message}")]
    InvalidSeries { id: String, message: String },
}

/// One (country, indicator) row of a wide table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub country: String,
    pub indicator_name: String,
    pub indicator_code: String,
    /// One entry per year column of the owning table.
    pub values: Vec<Option<f64>>,
}

/// A parsed wide-format table. All rows share the table's contiguous year axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    years: Vec<i32>,
    rows: Vec<RawRow>,
}

impl RawTable {
    /// Builds a table, checking that the years are contiguous and every row
    /// has one value per year.
    pub fn new(years: Vec<i32>, rows: Vec<RawRow>) -> Result<Self, IngestError> {
        check_contiguous(&years).map_err(IngestError::Header)?;
        for (i, row) in rows.iter().enumerate() {
            if row.values.len() != years.len() {
                return Err(IngestError::Record {
                    row: i + 1,
                    message: format!(
                        "expected {} year values, found {}",
                        years.len(),
                        row.values.len()
                    ),
                });
            }
        }
        Ok(Self { years, rows })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn rows(&self) -> &[RawRow] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [RawRow] {
        &mut self.rows
    }

    /// Distinct country names in order of first appearance.
    pub fn countries(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for row in &self.rows {
            if !seen.contains(&row.country.as_str()) {
                seen.push(row.country.as_str());
            }
        }
        seen
    }

    fn year_index(&self, year: i32) -> Option<usize> {
        let first = *self.years.first()?;
        let idx = usize::try_from(year - first).ok()?;
        (idx < self.years.len()).then_some(idx)
    }
}

fn check_contiguous(years: &[i32]) -> Result<(), String> {
    if years.is_empty() {
        return Err("no year columns".into());
    }
    for pair in years.windows(2) {
        if pair[1] != pair[0] + 1 {
            return Err(format!(
                "year columns must be contiguous and ascending, found {} after {}",
                pair[1], pair[0]
            ));
        }
    }
    Ok(())
}

/// Accepts `1996` and the World Bank export style `1996 [YR1996]`.
fn parse_year_header(raw: &str) -> Option<i32> {
    let raw = raw.trim();
    let digits = match raw.split_once(' ') {
        Some((head, tail)) if tail.trim() == format!("[YR{head}]") => head,
        Some(_) => return None,
        None => raw,
    };
    if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn parse_cell(raw: &str, row: usize, year: i32) -> Result<Option<f64>, IngestError> {
    let cell = raw.trim();
    if cell.is_empty() || cell == MISSING_SENTINEL {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(IngestError::Cell {
            row,
            year,
            value: cell.to_string(),
        }),
    }
}

/// Parses a wide-format indicator CSV file.
pub fn parse_wide_csv(path: impl AsRef<Path>) -> Result<RawTable, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_wide_csv(file)
}

/// Parses wide-format CSV from any reader. Rows are numbered from 1, not
/// counting the header.
pub fn read_wide_csv<R: Read>(reader: R) -> Result<RawTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header = rdr
        .headers()
        .map_err(|e| IngestError::Header(e.to_string()))?
        .clone();
    if header.len() < 4 {
        return Err(IngestError::Header(format!(
            "expected country, indicator name, indicator code and at least one year column, found {} columns",
            header.len()
        )));
    }
    let years = header
        .iter()
        .skip(3)
        .map(|h| {
            parse_year_header(h)
                .ok_or_else(|| IngestError::Header(format!("{h:?} is not a 4-digit year column")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    check_contiguous(&years).map_err(IngestError::Header)?;

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IngestError::Record {
            row,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(IngestError::Record {
                row,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let values = years
            .iter()
            .zip(record.iter().skip(3))
            .map(|(&year, cell)| parse_cell(cell, row, year))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(RawRow {
            country: record[0].trim().to_string(),
            indicator_name: record[1].trim().to_string(),
            indicator_code: record[2].trim().to_string(),
            values,
        });
    }
    Ok(RawTable { years, rows })
}

/// Writes a table in the layout [`read_wide_csv`] accepts. Values use the
/// shortest decimal rendering that parses back to the same `f64`.
pub fn write_wide_csv<W: Write>(table: &RawTable, writer: W) -> Result<(), IngestError> {
    let io = |e: csv::Error| IngestError::Io {
        path: "<writer>".into(),
        source: e.into(),
    };
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["Country".to_string(), "Indicator".into(), "Code".into()];
    header.extend(table.years.iter().map(i32::to_string));
    wtr.write_record(&header).map_err(io)?;
    for row in &table.rows {
        let mut record = vec![
            row.country.clone(),
            row.indicator_name.clone(),
            row.indicator_code.clone(),
        ];
        record.extend(
            row.values
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
        );
        wtr.write_record(&record).map_err(io)?;
    }
    wtr.flush().map_err(|source| IngestError::Io {
        path: "<writer>".into(),
        source,
    })
}

/// A fully observed annual series on a contiguous year axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    id: String,
    years: Vec<i32>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(
        id: impl Into<String>,
        years: Vec<i32>,
        values: Vec<f64>,
    ) -> Result<Self, IngestError> {
        let id = id.into();
        let invalid = |message: String| IngestError::InvalidSeries {
            id: id.clone(),
            message,
        };
        if years.len() != values.len() {
            return Err(invalid(format!(
                "{} years but {} values",
                years.len(),
                values.len()
            )));
        }
        check_contiguous(&years).map_err(&invalid)?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value in {}", years[pos])));
        }
        Ok(Self { id, years, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, year: i32) -> Option<f64> {
        let idx = usize::try_from(year - *self.years.first()?).ok()?;
        self.values.get(idx).copied()
    }

    /// The sub-series covering `start..=end`, which must lie inside the series.
    pub fn slice(&self, start: i32, end: i32) -> Option<TimeSeries> {
        let first = *self.years.first()?;
        let last = *self.years.last()?;
        if start > end || start < first || end > last {
            return None;
        }
        let lo = (start - first) as usize;
        let hi = (end - first) as usize + 1;
        Some(TimeSeries {
            id: self.id.clone(),
            years: self.years[lo..hi].to_vec(),
            values: self.values[lo..hi].to_vec(),
        })
    }
}

/// Target and predictor series for one country on a shared year axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPanel {
    country: String,
    target: TimeSeries,
    predictors: BTreeMap<String, TimeSeries>,
    year_range: (i32, i32),
}

impl IndicatorPanel {
    /// Assembles a panel, enforcing the shared year axis and that the target
    /// is not among the predictors.
    pub fn new(
        country: impl Into<String>,
        target: TimeSeries,
        predictors: BTreeMap<String, TimeSeries>,
    ) -> Result<Self, IngestError> {
        let (Some(&start), Some(&end)) = (target.years.first(), target.years.last()) else {
            return Err(IngestError::InvalidSeries {
                id: target.id.clone(),
                message: "empty target".into(),
            });
        };
        for (key, series) in &predictors {
            if key != &series.id {
                return Err(IngestError::InvalidSeries {
                    id: series.id.clone(),
                    message: format!("stored under key {key}"),
                });
            }
            if series.id == target.id {
                return Err(IngestError::InvalidSeries {
                    id: series.id.clone(),
                    message: "predictor shares the target id".into(),
                });
            }
            if series.years != target.years {
                return Err(IngestError::InvalidSeries {
                    id: series.id.clone(),
                    message: format!("years differ from the panel range {start}-{end}"),
                });
            }
        }
        Ok(Self {
            country: country.into(),
            target,
            predictors,
            year_range: (start, end),
        })
    }

    pub fn country(&self) -> &str {
        &self.country
    }

    pub fn target(&self) -> &TimeSeries {
        &self.target
    }

    pub fn predictors(&self) -> &BTreeMap<String, TimeSeries> {
        &self.predictors
    }

    pub fn predictor(&self, id: &str) -> Option<&TimeSeries> {
        self.predictors.get(id)
    }

    pub fn year_range(&self) -> (i32, i32) {
        self.year_range
    }

    pub fn years(&self) -> &[i32] {
        self.target.years()
    }

    /// Restricts every series to `start..=end`.
    pub fn slice(&self, start: i32, end: i32) -> Result<IndicatorPanel, IngestError> {
        let out_of_range = || {
            IngestError::InvalidParameter(format!(
                "years {start}-{end} outside panel range {}-{}",
                self.year_range.0, self.year_range.1
            ))
        };
        let target = self.target.slice(start, end).ok_or_else(out_of_range)?;
        let predictors = self
            .predictors
            .iter()
            .map(|(k, s)| Ok((k.clone(), s.slice(start, end).ok_or_else(out_of_range)?)))
            .collect::<Result<_, IngestError>>()?;
        Ok(IndicatorPanel {
            country: self.country.clone(),
            target,
            predictors,
            year_range: (start, end),
        })
    }
}

/// Fills interior gaps by linear interpolation between the nearest observed
/// neighbours. Returns `None` when the first or last value is missing.
/// Observed values are copied unchanged.
pub fn interpolate_interior(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let (Some(Some(_)), Some(Some(_))) = (values.first(), values.last()) else {
        return None;
    };
    let mut out = Vec::with_capacity(values.len());
    let mut prev = 0usize;
    for (i, v) in values.iter().enumerate() {
        match v {
            Some(x) => {
                out.push(*x);
                prev = i;
            }
            None => {
                let next = (i + 1..values.len())
                    .find(|&j| values[j].is_some())
                    .expect("last value is observed");
                let (x0, x1) = (values[prev].unwrap(), values[next].unwrap());
                let t = (i - prev) as f64 / (next - prev) as f64;
                out.push(x0 + t * (x1 - x0));
            }
        }
    }
    Some(out)
}

/// [`build_panel_in_range`] over every year of the table.
pub fn build_panel(
    table: &RawTable,
    country: &str,
    target_code: &str,
    max_missing_fraction: f64,
) -> Result<IndicatorPanel, IngestError> {
    let (Some(&start), Some(&end)) = (table.years.first(), table.years.last()) else {
        return Err(IngestError::Header("no year columns".into()));
    };
    build_panel_in_range(
        table,
        country,
        target_code,
        max_missing_fraction,
        (start, end),
    )
}

/// Extracts one country's panel over the intersection of `years` with the
/// table's year axis.
///
/// Predictors missing more than `max_missing_fraction` of those years, or
/// missing at either end of them, are dropped; the rest have interior gaps
/// interpolated. The target is always interpolated and must be observed at
/// both ends.
pub fn build_panel_in_range(
    table: &RawTable,
    country: &str,
    target_code: &str,
    max_missing_fraction: f64,
    years: (i32, i32),
) -> Result<IndicatorPanel, IngestError> {
    if !(0.0..1.0).contains(&max_missing_fraction) {
        return Err(IngestError::InvalidParameter(format!(
            "max_missing_fraction must be in [0, 1), got {max_missing_fraction}"
        )));
    }
    let start = years.0.max(table.years[0]);
    let end = years.1.min(*table.years.last().unwrap());
    if start > end {
        return Err(IngestError::NoYears {
            start: years.0,
            end: years.1,
        });
    }
    let lo = table.year_index(start).unwrap();
    let hi = table.year_index(end).unwrap() + 1;
    let axis: Vec<i32> = (start..=end).collect();

    let mut target = None;
    let mut predictors = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for row in table.rows.iter().filter(|r| r.country == country) {
        if !seen.insert(row.indicator_code.as_str()) {
            return Err(IngestError::DuplicateIndicator {
                country: country.into(),
                code: row.indicator_code.clone(),
            });
        }
        let window = &row.values[lo..hi];
        if row.indicator_code == target_code {
            let values =
                interpolate_interior(window).ok_or_else(|| IngestError::UnusableTarget {
                    country: country.into(),
                    code: target_code.into(),
                    start,
                    end,
                })?;
            target = Some(TimeSeries::new(target_code, axis.clone(), values)?);
            continue;
        }
        let missing = window.iter().filter(|v| v.is_none()).count();
        if missing as f64 / window.len() as f64 > max_missing_fraction {
            log::debug!(
                "{country}: dropping {} ({missing} missing)",
                row.indicator_code
            );
            continue;
        }
        let Some(values) = interpolate_interior(window) else {
            log::debug!("{country}: dropping {} (edge gap)", row.indicator_code);
            continue;
        };
        predictors.insert(
            row.indicator_code.clone(),
            TimeSeries::new(row.indicator_code.clone(), axis.clone(), values)?,
        );
    }
    let target = target.ok_or_else(|| IngestError::MissingTarget {
        country: country.into(),
        code: target_code.into(),
    })?;
    IndicatorPanel::new(country, target, predictors)
}

/// Standardizes to zero mean and unit population standard deviation.
/// Constant input maps to all zeros.
pub fn zscore(series: &[f64]) -> Result<Vec<f64>, IngestError> {
    if series.len() < 2 {
        return Err(IngestError::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    if series.iter().all(|&v| v == series[0]) {
        return Ok(vec![0.0; series.len()]);
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Ok(vec![0.0; series.len()]);
    }
    Ok(series.iter().map(|v| (v - mean) / sd).collect())
}
