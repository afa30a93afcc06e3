//! CSV ingestion and serialization of datasets.
//!
//! Files carry a header row. The outcome column may contain empty cells or
//! the token `NA` (case-insensitive) for missing values; covariate and
//! instrument cells must parse as finite numbers. An optional indicator
//! column, when declared, must equal the emptiness pattern of the outcome.

use std::path::Path;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct InputSchema {
    pub y_col: String,
    pub indicator_col: Option<String>,
    pub u_cols: Vec<String>,
    pub z_cols: Vec<String>,
}

impl InputSchema {
    pub fn new(
        y_col: impl Into<String>,
        u_cols: Vec<String>,
        z_cols: Vec<String>,
        indicator_col: Option<String>,
    ) -> Result<Self> {
        let schema = Self {
            y_col: y_col.into(),
            indicator_col,
            u_cols,
            z_cols,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_cols.is_empty() || self.z_cols.is_empty() {
            return Err(Error::Schema(
                "need at least one u-column and one z-column".into(),
            ));
        }
        let mut all: Vec<&String> = vec![&self.y_col];
        all.extend(self.u_cols.iter());
        all.extend(self.z_cols.iter());
        if let Some(ref ind) = self.indicator_col {
            all.push(ind);
        }
        for (i, a) in all.iter().enumerate() {
            for b in all.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::Schema(format!("column '{a}' declared twice")));
                }
            }
        }
        Ok(())
    }
}

fn is_missing_token(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na")
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let t = cell.trim();
    let v: f64 = t.parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("cannot parse '{t}' as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("nonfinite value '{t}'"),
        });
    }
    Ok(v)
}

pub fn read_dataset(path: &Path, schema: &InputSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let y_idx = find(&schema.y_col)?;
    let u_idx: Vec<usize> = schema
        .u_cols
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let z_idx: Vec<usize> = schema
        .z_cols
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let ind_idx = schema
        .indicator_col
        .as_ref()
        .map(|c| find(c))
        .transpose()?;

    let mut y: Vec<Option<f64>> = Vec::new();
    let mut u_vals: Vec<f64> = Vec::new();
    let mut z_vals: Vec<f64> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1; // 1-based data rows, header excluded
        let record = record.map_err(|e| Error::Parse {
            row,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        let get = |idx: usize, name: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })
        };
        let y_cell = get(y_idx, &schema.y_col)?;
        let y_val = if is_missing_token(y_cell) {
            None
        } else {
            Some(parse_number(y_cell, row, &schema.y_col)?)
        };
        if let Some(idx) = ind_idx {
            let name = schema.indicator_col.as_deref().unwrap_or("indicator");
            let cell = get(idx, name)?;
            let flag = match cell.trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        row,
                        column: name.to_string(),
                        message: format!("indicator must be 0 or 1, got '{other}'"),
                    })
                }
            };
            if flag != y_val.is_some() {
                return Err(Error::Schema(format!(
                    "indicator column contradicts the outcome emptiness pattern at row {row}"
                )));
            }
        }
        y.push(y_val);
        for (k, &idx) in u_idx.iter().enumerate() {
            u_vals.push(parse_number(get(idx, &schema.u_cols[k])?, row, &schema.u_cols[k])?);
        }
        for (k, &idx) in z_idx.iter().enumerate() {
            z_vals.push(parse_number(get(idx, &schema.z_cols[k])?, row, &schema.z_cols[k])?);
        }
    }
    let n = y.len();
    let u = DMatrix::from_row_slice(n, u_idx.len(), &u_vals);
    let z = DMatrix::from_row_slice(n, z_idx.len(), &z_vals);
    Dataset::new(y, u, z)
}

/// Serialize with 17 significant digits so that reading the file back
/// reproduces every value bit-exactly.
fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a dataset under the given schema; missing outcomes become empty
/// cells, and the indicator column (if declared) is written as 0/1.
pub fn write_dataset(path: &Path, data: &Dataset, schema: &InputSchema) -> Result<()> {
    schema.validate()?;
    if schema.u_cols.len() != data.m_u() || schema.z_cols.len() != data.m_z() {
        return Err(Error::Schema(format!(
            "schema declares {}+{} covariate columns, dataset has {}+{}",
            schema.u_cols.len(),
            schema.z_cols.len(),
            data.m_u(),
            data.m_z()
        )));
    }
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Schema(format!("cannot create {}: {e}", path.display())))?;
    let mut header = vec![schema.y_col.clone()];
    if let Some(ref ind) = schema.indicator_col {
        header.push(ind.clone());
    }
    header.extend(schema.u_cols.iter().cloned());
    header.extend(schema.z_cols.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| Error::Schema(e.to_string()))?;
    for i in 0..data.n() {
        let mut record = Vec::with_capacity(header.len());
        record.push(data.y(i).map(format_value).unwrap_or_default());
        if schema.indicator_col.is_some() {
            record.push(if data.is_observed(i) { "1" } else { "0" }.to_string());
        }
        for d in 0..data.m_u() {
            record.push(format_value(data.u()[(i, d)]));
        }
        for d in 0..data.m_z() {
            record.push(format_value(data.z()[(i, d)]));
        }
        writer
            .write_record(&record)
            .map_err(|e| Error::Schema(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir();
        let path = dir.join(format!(
            "martest_io_test_{}_{}.csv",
            std::process::id(),
            content.len()
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn schema() -> InputSchema {
        InputSchema::new(
            "y",
            vec!["u1".into()],
            vec!["z1".into()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn empty_and_na_cells_are_missing() {
        let path = write_tmp(
            "y,u1,z1\n1.5,0.1,0.2\n,0.3,0.4\nNA,0.5,0.6\n2.5,0.7,0.8\n3.5,0.9,1.0\n0.5,1.1,1.2\n",
        );
        let data = read_dataset(&path, &schema()).unwrap();
        assert_eq!(data.n(), 6);
        assert_eq!(
            data.indicators(),
            &[true, false, false, true, true, true]
        );
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn na_in_covariate_is_a_parse_error_naming_the_cell() {
        let path = write_tmp(
            "y,u1,z1\n1.5,0.1,0.2\n2.0,NA,0.4\n2.5,0.5,0.6\n3.0,0.7,0.8\n1.0,0.9,1.0\n",
        );
        match read_dataset(&path, &schema()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "u1");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn inconsistent_indicator_is_a_schema_error() {
        let path = write_tmp(
            "y,r,u1,z1\n1.5,1,0.1,0.2\n,1,0.3,0.4\n2.5,1,0.5,0.6\n3.0,1,0.7,0.8\n1.0,1,0.9,1.0\n",
        );
        let schema = InputSchema::new(
            "y",
            vec!["u1".into()],
            vec!["z1".into()],
            Some("r".into()),
        )
        .unwrap();
        assert!(matches!(
            read_dataset(&path, &schema),
            Err(Error::Schema(_))
        ));
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn scientific_notation_parses() {
        let path = write_tmp(
            "y,u1,z1\n1.5e0,1e-1,2.0E-1\n2.5,0.3,0.4\n3.5,0.5,0.6\n0.5,0.7,0.8\n1.0,0.9,1.0\n",
        );
        let data = read_dataset(&path, &schema()).unwrap();
        assert_eq!(data.y(0), Some(1.5));
        assert_eq!(data.u()[(0, 0)], 0.1);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn round_trip_is_bit_exact() {
        use crate::sim::{generate_dataset, FShape, Scenario};
        let sc = Scenario::new(1.0, 0.85, 0.2, 0.3, FShape::Linear, 200).unwrap();
        let sim = generate_dataset(&sc, 21).unwrap();
        let path = std::env::temp_dir().join(format!(
            "martest_roundtrip_{}.csv",
            std::process::id()
        ));
        let schema = InputSchema::new(
            "y",
            vec!["u1".into()],
            vec!["z1".into()],
            Some("r".into()),
        )
        .unwrap();
        write_dataset(&path, &sim.dataset, &schema).unwrap();
        let back = read_dataset(&path, &schema).unwrap();
        assert_eq!(back.n(), sim.dataset.n());
        for i in 0..back.n() {
            assert_eq!(back.y(i), sim.dataset.y(i), "row {i}");
            assert_eq!(back.u()[(i, 0)], sim.dataset.u()[(i, 0)], "row {i}");
            assert_eq!(back.z()[(i, 0)], sim.dataset.z()[(i, 0)], "row {i}");
        }
        std::fs::remove_file(path).ok();
    }
}
