//! CSV ingestion with FRED-MD style stationarity transforms, and CSV output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::series::SeriesMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub target_column: String,
    /// Transform code per column name; unlisted columns use code 1. When
    /// absent, a `Transform:` row directly under the header supplies them.
    #[serde(default)]
    pub transform_codes: Option<BTreeMap<String, u8>>,
    /// Column holding time labels; excluded from the data.
    #[serde(default)]
    pub date_column: Option<String>,
    /// Drop predictors with any missing value instead of dropping rows.
    #[serde(default)]
    pub drop_missing_columns: bool,
}

impl DatasetSpec {
    pub fn new(path: impl Into<PathBuf>, target_column: impl Into<String>) -> Self {
        DatasetSpec {
            path: path.into(),
            target_column: target_column.into(),
            transform_codes: None,
            date_column: None,
            drop_missing_columns: false,
        }
    }
}

/// What loading did to the raw file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    /// Leading rows consumed by differencing.
    pub leading_rows_dropped: usize,
    /// Time labels of rows dropped for missing values.
    pub missing_rows_dropped: Vec<String>,
    pub columns_dropped: Vec<String>,
    /// Code applied to each kept column.
    pub transform_codes: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub series: SeriesMatrix,
    pub target: usize,
    pub report: LoadReport,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "NaN" | "nan" | "." | "null")
}

/// Rows lost at the start of the sample by each code.
pub fn transform_lag(code: u8) -> usize {
    match code {
        2 | 5 => 1,
        3 | 6 | 7 => 2,
        _ => 0,
    }
}

/// Applies a transform code to one column. Leading entries without enough
/// history, and entries touching a missing value, come out as `None`.
pub fn apply_transform(values: &[Option<f64>], code: u8, column: &str) -> Result<Vec<Option<f64>>> {
    if !(1..=7).contains(&code) {
        return Err(Error::Config(format!("transform code {code} for column {column:?} is not in 1..=7")));
    }
    if (4..=6).contains(&code) {
        if let Some(row) = values.iter().position(|v| v.is_some_and(|x| x <= 0.0)) {
            return Err(Error::input(format!(
                "column {column:?} has a non-positive value at data row {} under log transform code {code}",
                row + 1
            )));
        }
    }
    let diff = |v: &[Option<f64>]| -> Vec<Option<f64>> {
        (0..v.len())
            .map(|t| match (t.checked_sub(1).and_then(|s| v[s]), v[t]) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            })
            .collect()
    };
    let logs = || values.iter().map(|v| v.map(f64::ln)).collect::<Vec<_>>();
    Ok(match code {
        1 => values.to_vec(),
        2 => diff(values),
        3 => diff(&diff(values)),
        4 => logs(),
        5 => diff(&logs()),
        6 => diff(&diff(&logs())),
        _ => {
            let growth: Vec<Option<f64>> = (0..values.len())
                .map(|t| match (t.checked_sub(1).and_then(|s| values[s]), values[t]) {
                    (Some(a), Some(b)) if a != 0.0 => Some(b / a - 1.0),
                    _ => None,
                })
                .collect();
            diff(&growth)
        }
    })
}

struct RawTable {
    headers: Vec<String>,
    /// One entry per data row: (file line number, cells).
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(RawTable { headers, rows })
}

/// Reads a CSV panel, applies transform codes, and aligns the columns.
pub fn load_csv(spec: &DatasetSpec) -> Result<LoadedDataset> {
    let mut table = read_table(&spec.path)?;
    let date_idx = match &spec.date_column {
        Some(name) => Some(
            table
                .headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("date column {name:?} not found")))?,
        ),
        None => None,
    };
    let data_cols: Vec<usize> = (0..table.headers.len()).filter(|&j| Some(j) != date_idx).collect();
    if !data_cols.iter().any(|&j| table.headers[j] == spec.target_column) {
        return Err(Error::Config(format!("target column {:?} not found", spec.target_column)));
    }

    // optional FRED-MD style code row, labelled in the date column
    let mut file_codes: BTreeMap<String, u8> = BTreeMap::new();
    let first_label = date_idx.and_then(|d| table.rows.first().map(|(_, cells)| cells[d].to_ascii_lowercase()));
    if first_label.is_some_and(|l| l.starts_with("transform")) {
        let (line, cells) = table.rows.remove(0);
        for &j in &data_cols {
            let cell = &cells[j];
            if is_missing(cell) {
                continue;
            }
            let code = cell.parse::<f64>().ok().filter(|c| c.fract() == 0.0 && (1.0..=7.0).contains(c));
            let code = code.ok_or_else(|| Error::Parse {
                row: line,
                column: table.headers[j].clone(),
                message: format!("invalid transform code {cell:?}"),
            })?;
            file_codes.insert(table.headers[j].clone(), code as u8);
        }
    }
    let codes = spec.transform_codes.clone().unwrap_or(file_codes);
    for name in codes.keys() {
        if !data_cols.iter().any(|&j| &table.headers[j] == name) {
            return Err(Error::Config(format!("transform code given for unknown column {name:?}")));
        }
    }

    let rows_read = table.rows.len();
    let mut columns: Vec<(String, Vec<Option<f64>>, u8)> = Vec::with_capacity(data_cols.len());
    for &j in &data_cols {
        let name = table.headers[j].clone();
        let mut values = Vec::with_capacity(rows_read);
        for (line, cells) in &table.rows {
            let cell = &cells[j];
            if is_missing(cell) {
                values.push(None);
                continue;
            }
            let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                row: *line,
                column: name.clone(),
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            values.push(Some(v));
        }
        let code = codes.get(&name).copied().unwrap_or(1);
        let transformed = apply_transform(&values, code, &name)?;
        columns.push((name, transformed, code));
    }

    let lead = columns.iter().map(|(_, _, c)| transform_lag(*c)).max().unwrap_or(0);
    let labels: Vec<String> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, (_, cells))| date_idx.map_or_else(|| i.to_string(), |d| cells[d].clone()))
        .collect();

    let mut report = LoadReport { rows_read, leading_rows_dropped: lead.min(rows_read), ..Default::default() };
    columns.retain(|(name, values, _)| {
        let body = &values[lead.min(values.len())..];
        let all_missing = body.iter().all(Option::is_none);
        let some_missing = body.iter().any(Option::is_none);
        let drop = name != &spec.target_column && (all_missing || (spec.drop_missing_columns && some_missing));
        if drop {
            report.columns_dropped.push(name.clone());
        }
        !drop
    });

    let mut kept_rows = Vec::new();
    for t in lead..rows_read {
        if columns.iter().all(|(_, v, _)| v[t].is_some()) {
            kept_rows.push(t);
        } else {
            report.missing_rows_dropped.push(labels[t].clone());
        }
    }
    if kept_rows.is_empty() {
        return Err(Error::input("no complete rows remain after transforms"));
    }

    let n = kept_rows.len();
    let cols: Vec<Vec<f64>> =
        columns.iter().map(|(_, v, _)| kept_rows.iter().map(|&t| v[t].expect("complete row")).collect()).collect();
    let names: Vec<String> = columns.iter().map(|(n, _, _)| n.clone()).collect();
    report.transform_codes = columns.iter().map(|(n, _, c)| (n.clone(), *c)).collect();
    let time_index = kept_rows.iter().map(|&t| labels[t].clone()).collect();
    let series = SeriesMatrix::with_time_index(names, time_index, Matrix::from_columns(n, &cols))?;
    let target = series.column_index(&spec.target_column).expect("target kept");
    Ok(LoadedDataset { series, target, report })
}

/// Writes a panel with a header row. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_series_csv(series: &SeriesMatrix, path: &Path, date_column: Option<&str>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = Vec::new();
    if let Some(d) = date_column {
        header.push(d);
    }
    header.extend(series.names().iter().map(String::as_str));
    w.write_record(&header)?;
    for t in 0..series.n_obs() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        if date_column.is_some() {
            row.push(series.time_index()[t].clone());
        }
        row.extend((0..series.n_cols()).map(|j| format!("{:?}", series.column(j)[t])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes only the header when `rows` is empty.
pub fn write_records_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        w.flush()?;
        return Ok(());
    }
    write_records(path, rows)
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate, DgpConfig};
    use std::io::Write;

    fn col(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().copied().map(Some).collect()
    }

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn transform_arithmetic() {
        assert_eq!(apply_transform(&col(&[1.0, 3.0, 6.0]), 2, "a").unwrap(), vec![None, Some(2.0), Some(3.0)]);
        assert_eq!(apply_transform(&col(&[1.0, 3.0, 6.0]), 3, "a").unwrap(), vec![None, None, Some(1.0)]);
        let e = std::f64::consts::E;
        let out = apply_transform(&col(&[1.0, e, e * e]), 5, "a").unwrap();
        assert!((out[1].unwrap() - 1.0).abs() < 1e-15 && (out[2].unwrap() - 1.0).abs() < 1e-15);
        let out = apply_transform(&col(&[1.0, 2.0, 6.0]), 7, "a").unwrap();
        assert_eq!(out, vec![None, None, Some(1.0)]);
        let out = apply_transform(&col(&[1.0, e]), 4, "a").unwrap();
        assert_eq!(out[0], Some(0.0));
        assert!(apply_transform(&col(&[1.0, 0.0]), 5, "bad").unwrap_err().to_string().contains("bad"));
        assert!(apply_transform(&col(&[1.0]), 8, "a").is_err());
    }

    #[test]
    fn load_with_codes_and_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "date,y,x\nTransform:,2,1\n2000-01,1,10\n2000-02,3,11\n2000-03,6,12\n");
        let spec = DatasetSpec { date_column: Some("date".into()), ..DatasetSpec::new(&p, "y") };
        let loaded = load_csv(&spec).unwrap();
        assert_eq!(loaded.series.column(0), &[2.0, 3.0]);
        assert_eq!(loaded.series.column(1), &[11.0, 12.0]);
        assert_eq!(loaded.series.time_index(), &["2000-02", "2000-03"]);
        assert_eq!(loaded.report.leading_rows_dropped, 1);
        assert_eq!(loaded.report.rows_read, 3);
    }

    #[test]
    fn missing_rows_and_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "y,a,b\n1,2,\n2,NA,\n3,4,\n4,5,\n");
        let loaded = load_csv(&DatasetSpec::new(&p, "y")).unwrap();
        assert_eq!(loaded.report.columns_dropped, vec!["b".to_string()]);
        assert_eq!(loaded.report.missing_rows_dropped, vec!["1".to_string()]);
        assert_eq!(loaded.series.n_obs(), 3);
        let spec = DatasetSpec { drop_missing_columns: true, ..DatasetSpec::new(&p, "y") };
        let loaded = load_csv(&spec).unwrap();
        assert_eq!(loaded.series.names(), &["y".to_string()]);
        assert_eq!(loaded.series.n_obs(), 4);
    }

    #[test]
    fn parse_errors_locate_the_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "y,x\n1,2\n3,abc\n");
        match load_csv(&DatasetSpec::new(&p, "y")).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "x");
            }
            e => panic!("unexpected {e}"),
        }
        let spec = DatasetSpec::new(&p, "missing");
        assert!(load_csv(&spec).unwrap_err().is_config_error());
        let p = write(dir.path(), "neg.csv", "y,x\n1,2\n3,-1\n");
        let mut spec = DatasetSpec::new(&p, "y");
        spec.transform_codes = Some([("x".to_string(), 5u8)].into_iter().collect());
        assert!(load_csv(&spec).unwrap_err().to_string().contains("\"x\""));
    }

    #[test]
    fn exported_panel_round_trips_exactly() {
        let panel = generate(&DgpConfig { dgp_id: 1, n: 50, p: 8, r_dgp: 2, s: 4, seed: 1 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("panel.csv");
        write_series_csv(&panel.series, &p, None).unwrap();
        let loaded = load_csv(&DatasetSpec::new(&p, "y")).unwrap();
        assert_eq!(loaded.series.data(), panel.series.data());
        assert_eq!(loaded.series.names(), panel.series.names());
    }
}
