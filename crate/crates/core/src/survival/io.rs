//! CSV ingestion of subject-level data and export of person-period rows.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::{AugmentedDataset, Dataset, SubjectRecord, ZKind, ZVariable};
use crate::error::DataError;

/// Column declarations for a subject-level CSV file. Every z column not
/// listed in `categorical` is parsed as a real number.
#[derive(Clone, Debug, Default)]
pub struct CsvSchema {
    pub time_col: String,
    pub status_col: String,
    pub x_cols: Vec<String>,
    pub z_cols: Vec<String>,
    pub categorical: Vec<String>,
    pub id_col: Option<String>,
}

fn csv_err(e: csv::Error) -> DataError {
    DataError::Csv(e.to_string())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn is_missing(v: &str) -> bool {
    v.is_empty() || v.eq_ignore_ascii_case("na") || v.eq_ignore_ascii_case("nan")
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::MissingColumn(name.to_string()))
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<&'a str, DataError> {
    let v = rec.get(idx).unwrap_or("");
    if is_missing(v) {
        return Err(DataError::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    Ok(v)
}

fn parse_f64(v: &str, row: usize, column: &str) -> Result<f64, DataError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| DataError::Parse {
            row,
            column: column.to_string(),
            value: v.to_string(),
        })
}

fn parse_int(v: &str, row: usize, column: &str) -> Result<i64, DataError> {
    if let Ok(i) = v.parse::<i64>() {
        return Ok(i);
    }
    match v.parse::<f64>() {
        Ok(f) if f.is_finite() && f.fract() == 0.0 => Ok(f as i64),
        _ => Err(DataError::Parse {
            row,
            column: column.to_string(),
            value: v.to_string(),
        }),
    }
}

/// Reads and validates a subject-level dataset. Categorical levels are
/// numbered in order of first appearance. Rows are numbered from 1
/// (excluding the header) in error messages.
pub fn read_dataset<R: Read>(input: R, schema: &CsvSchema, k_max: Option<u32>) -> Result<Dataset, DataError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let time_idx = column_index(&headers, &schema.time_col)?;
    let status_idx = column_index(&headers, &schema.status_col)?;
    let id_idx = schema.id_col.as_ref().map(|c| column_index(&headers, c)).transpose()?;
    let x_idx = schema
        .x_cols
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>, _>>()?;
    let z_idx = schema
        .z_cols
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(c) = schema.categorical.iter().find(|c| !schema.z_cols.contains(c)) {
        return Err(DataError::Schema(format!(
            "categorical column '{c}' is not declared as a z column"
        )));
    }
    let is_cat: Vec<bool> = schema.z_cols.iter().map(|c| schema.categorical.contains(c)).collect();
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); z_idx.len()];
    let mut lookup: Vec<HashMap<String, usize>> = vec![HashMap::new(); z_idx.len()];

    let mut subjects = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = i + 1;
        let time = parse_int(field(&rec, time_idx, row, &schema.time_col)?, row, &schema.time_col)?;
        let status = parse_int(
            field(&rec, status_idx, row, &schema.status_col)?,
            row,
            &schema.status_col,
        )?;
        let id = match (id_idx, &schema.id_col) {
            (Some(idx), Some(name)) => parse_int(field(&rec, idx, row, name)?, row, name)?,
            _ => row as i64,
        };
        let x = x_idx
            .iter()
            .zip(&schema.x_cols)
            .map(|(&idx, name)| parse_f64(field(&rec, idx, row, name)?, row, name))
            .collect::<Result<Vec<_>, _>>()?;
        let mut z = Vec::with_capacity(z_idx.len());
        for (l, (&idx, name)) in z_idx.iter().zip(&schema.z_cols).enumerate() {
            let v = field(&rec, idx, row, name)?;
            if is_cat[l] {
                let next = levels[l].len();
                let code = *lookup[l].entry(v.to_string()).or_insert_with(|| {
                    levels[l].push(v.to_string());
                    next
                });
                z.push(code as f64);
            } else {
                z.push(parse_f64(v, row, name)?);
            }
        }
        subjects.push(SubjectRecord::new(id, time, status, x, z));
    }
    let z_vars = schema
        .z_cols
        .iter()
        .zip(is_cat)
        .zip(levels)
        .map(|((name, cat), lv)| {
            if cat {
                ZVariable::categorical(name.clone(), lv)
            } else {
                ZVariable::numeric(name.clone())
            }
        })
        .collect();
    Dataset::new(subjects, schema.x_cols.clone(), z_vars, k_max)
}

/// Covariates of one prediction row.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateRow {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
}

/// Reads covariate rows for prediction against a fixed schema. Categorical
/// labels must belong to the schema's level set.
pub fn read_covariates<R: Read>(
    input: R,
    z_vars: &[ZVariable],
    x_names: &[String],
) -> Result<Vec<CovariateRow>, DataError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let z_idx = z_vars
        .iter()
        .map(|v| column_index(&headers, &v.name))
        .collect::<Result<Vec<_>, _>>()?;
    let x_idx = x_names
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = i + 1;
        let mut z = Vec::with_capacity(z_vars.len());
        for (var, &idx) in z_vars.iter().zip(&z_idx) {
            let v = field(&rec, idx, row, &var.name)?;
            match &var.kind {
                ZKind::Numeric => z.push(parse_f64(v, row, &var.name)?),
                ZKind::Categorical { levels } => {
                    let code = levels
                        .iter()
                        .position(|l| l == v)
                        .ok_or_else(|| DataError::UnseenLevel {
                            row,
                            column: var.name.clone(),
                            level: v.to_string(),
                        })?;
                    z.push(code as f64);
                }
            }
        }
        let x = x_names
            .iter()
            .zip(&x_idx)
            .map(|(name, &idx)| parse_f64(field(&rec, idx, row, name)?, row, name))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(CovariateRow { z, x });
    }
    Ok(out)
}

/// Formats a z value: level label for categorical variables, shortest
/// round-trip decimal otherwise.
pub fn format_z(var: &ZVariable, value: f64) -> String {
    match &var.kind {
        ZKind::Categorical { levels } => levels[value as usize].clone(),
        ZKind::Numeric => format!("{value}"),
    }
}

/// Writes person-period rows with columns `subject_id, t_star, y, x..., z...`.
/// Numeric values use the shortest representation that parses back to the
/// same `f64`.
pub fn write_augmented<W: Write>(aug: &AugmentedDataset, dataset: &Dataset, out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subject_id".to_string(), "t_star".into(), "y".into()];
    header.extend(dataset.x_names().iter().cloned());
    header.extend(dataset.z_vars().iter().map(|v| v.name.clone()));
    w.write_record(&header).map_err(csv_err)?;
    let mut rec = Vec::with_capacity(header.len());
    for r in 0..aug.n() {
        rec.clear();
        rec.push(aug.subject_ids[aug.subject_of_row[r]].to_string());
        rec.push(aug.t_star[r].to_string());
        rec.push(aug.y[r].to_string());
        rec.extend(aug.x_row(r).iter().map(|v| format!("{v}")));
        rec.extend(
            aug.z_row(r)
                .iter()
                .zip(dataset.z_vars())
                .map(|(v, var)| format_z(var, *v)),
        );
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))?;
    Ok(())
}
