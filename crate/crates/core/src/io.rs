//! Headered CSV input and output for selection samples.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Column roles. A name may serve as both an outcome regressor and a
/// selection regressor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub outcome_column: String,
    pub selection_column: String,
    pub x_columns: Vec<String>,
    pub z_columns: Vec<String>,
    pub group_column: Option<String>,
}

impl CsvSchema {
    /// `y`, `d`, `x1..xk`, `z1..zl`.
    pub fn simulated(k: usize, l: usize) -> Self {
        CsvSchema {
            outcome_column: "y".into(),
            selection_column: "d".into(),
            x_columns: (1..=k).map(|j| format!("x{j}")).collect(),
            z_columns: (1..=l).map(|j| format!("z{j}")).collect(),
            group_column: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dup = |cols: &[String], what: &str| -> Result<()> {
            for (i, c) in cols.iter().enumerate() {
                if cols[..i].contains(c) {
                    return Err(Error::InvalidArgument(format!("duplicate {what} column {c}")));
                }
            }
            Ok(())
        };
        dup(&self.x_columns, "x")?;
        dup(&self.z_columns, "z")?;
        if self.z_columns.is_empty() {
            return Err(Error::InvalidArgument("schema needs at least one z column".into()));
        }
        let mut special = vec![&self.outcome_column, &self.selection_column];
        special.extend(self.group_column.as_ref());
        for (i, s) in special.iter().enumerate() {
            if special[..i].contains(s) || self.x_columns.contains(s) || self.z_columns.contains(s) {
                return Err(Error::InvalidArgument(format!("column {s} has more than one role")));
            }
        }
        Ok(())
    }

    /// Distinct column names in output order.
    fn columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = vec![&self.outcome_column, &self.selection_column];
        for c in self.x_columns.iter().chain(&self.z_columns) {
            if !cols.contains(&c.as_str()) {
                cols.push(c);
            }
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loaded {
    Single(Dataset),
    /// Rows with group value 0, then 1.
    Pair(Dataset, Dataset),
}

struct Rows {
    d: Vec<bool>,
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
}

impl Rows {
    fn new() -> Self {
        Rows {
            d: Vec::new(),
            y: Vec::new(),
            x: Vec::new(),
            z: Vec::new(),
        }
    }

    fn into_dataset(self) -> Result<Dataset> {
        let n = self.y.len();
        let k = self.x.first().map_or(0, |r| r.len());
        let l = self.z.first().map_or(0, |r| r.len());
        let x = DMatrix::from_fn(n, k, |i, j| self.x[i][j]);
        let z = DMatrix::from_fn(n, l, |i, j| self.z[i][j]);
        Dataset::new(self.d, self.y, x, z)
    }
}

fn binary(field: &str, row: usize, name: &str) -> Result<bool> {
    match field.trim().parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(false),
        Ok(v) if v == 1.0 => Ok(true),
        _ => Err(Error::BadRow {
            row,
            msg: format!("{name} value {field:?} is not 0 or 1"),
        }),
    }
}

/// Reads a comma-separated file with a header row. Data rows are numbered
/// from 1 in error messages. Rows with an unparseable required field are
/// rejected, never imputed.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Loaded> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| Error::Io(e.to_string()))?;
    let header = reader.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    if header.is_empty() {
        return Err(Error::EmptyFile);
    }
    let position: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| position.get(name).copied().ok_or_else(|| Error::MissingColumn(name.to_string()));
    let y_col = find(&schema.outcome_column)?;
    let d_col = find(&schema.selection_column)?;
    let x_cols = schema.x_columns.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let z_cols = schema.z_columns.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let g_col = schema.group_column.as_deref().map(find).transpose()?;

    let mut groups = [Rows::new(), Rows::new()];
    let mut count = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::BadRow { row, msg: e.to_string() })?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let number = |col: usize| -> Result<f64> {
            let raw = field(col);
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::BadRow {
                row,
                msg: format!("column {} value {raw:?} is not a finite number", &header[col]),
            })
        };
        let d = binary(field(d_col), row, &schema.selection_column)?;
        let group = match g_col {
            Some(c) => binary(field(c), row, schema.group_column.as_deref().unwrap_or_default())? as usize,
            None => 0,
        };
        let target = &mut groups[group];
        target.d.push(d);
        target.y.push(number(y_col)?);
        target.x.push(x_cols.iter().map(|&c| number(c)).collect::<Result<_>>()?);
        target.z.push(z_cols.iter().map(|&c| number(c)).collect::<Result<_>>()?);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyFile);
    }
    let [g0, g1] = groups;
    match g_col {
        None => Ok(Loaded::Single(g0.into_dataset()?)),
        Some(_) => Ok(Loaded::Pair(
            g0.into_dataset().map_err(|e| e.in_group("group 0"))?,
            g1.into_dataset().map_err(|e| e.in_group("group 1"))?,
        )),
    }
}

/// Decimal text with 17 significant digits, which round-trips every `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `data` under `schema` (the group column, if any, is not written).
/// A column listed in both `x` and `z` must hold the same values.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset, schema: &CsvSchema) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv_to(file, data, schema, &[])
}

/// As [`write_csv`], to any writer, with extra numeric columns appended.
pub fn write_csv_to(
    out: impl std::io::Write,
    data: &Dataset,
    schema: &CsvSchema,
    extra: &[(&str, &[f64])],
) -> Result<()> {
    schema.validate()?;
    if schema.x_columns.len() != data.k() || schema.z_columns.len() != data.l() {
        return Err(Error::DimensionMismatch(format!(
            "schema has {} x and {} z columns, data has {} and {}",
            schema.x_columns.len(),
            schema.z_columns.len(),
            data.k(),
            data.l()
        )));
    }
    if let Some((name, _)) = extra.iter().find(|(_, v)| v.len() != data.n()) {
        return Err(Error::DimensionMismatch(format!("extra column {name} has the wrong length")));
    }
    let cols = schema.columns();
    let mut writer = csv::Writer::from_writer(out);
    let header = cols.iter().copied().chain(extra.iter().map(|(name, _)| *name));
    writer.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for i in 0..data.n() {
        let value = |name: &str| -> String {
            if name == schema.outcome_column {
                format_f64(data.y()[i])
            } else if name == schema.selection_column {
                (data.d()[i] as u8).to_string()
            } else if let Some(j) = schema.x_columns.iter().position(|c| c == name) {
                format_f64(data.x()[(i, j)])
            } else {
                let j = schema.z_columns.iter().position(|c| c == name).expect("column from schema");
                format_f64(data.z()[(i, j)])
            }
        };
        let record = cols
            .iter()
            .map(|c| value(c))
            .chain(extra.iter().map(|(_, v)| format_f64(v[i])));
        writer.write_record(record).map_err(|e| Error::Io(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
