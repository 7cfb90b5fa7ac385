//! CSV ingestion and output.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, GpError, Result};

/// A numeric table with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

fn csv_parse_error(e: csv::Error) -> GpError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => GpError::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => GpError::Parse {
            line,
            column: len as usize + 1,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        kind => GpError::Parse {
            line,
            column: 1,
            message: format!("{kind:?}"),
        },
    }
}

impl Dataset {
    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| GpError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Dataset::from_reader(file)
    }

    /// Parses a headed CSV. Every field must be a finite number and header
    /// names must be unique.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(csv_parse_error)?.clone();
        let columns: Vec<String> = header.iter().map(str::to_string).collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(GpError::Parse {
                line: 1,
                column: 1,
                message: "missing header row".into(),
            });
        }
        let mut seen = HashSet::new();
        for (j, c) in columns.iter().enumerate() {
            if c.is_empty() {
                return Err(GpError::Parse {
                    line: 1,
                    column: j + 1,
                    message: "empty column name".into(),
                });
            }
            if !seen.insert(c.as_str()) {
                return Err(GpError::Parse {
                    line: 1,
                    column: j + 1,
                    message: format!("duplicated column name '{c}'"),
                });
            }
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(csv_parse_error)?;
            let line = rec.position().map_or(0, |p| p.line());
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| GpError::Parse {
                    line,
                    column: j + 1,
                    message: format!("cannot parse '{field}' as a number"),
                })?;
                if !v.is_finite() {
                    return Err(GpError::Parse {
                        line,
                        column: j + 1,
                        message: format!("non-finite value '{field}'"),
                    });
                }
                data.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(invalid("CSV has no data rows"));
        }
        let values = DMatrix::from_row_slice(rows, columns.len(), &data);
        Ok(Dataset { columns, values })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| invalid(format!("column '{name}' not found (have {})", self.columns.join(", "))))
    }

    pub fn select(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let idx = names.iter().map(|n| self.column_index(n)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.nrows(), idx.len(), |i, j| self.values[(i, idx[j])]))
    }

    /// Input column names: `inputs` if given, else every column except `target`.
    pub fn input_names(&self, inputs: Option<&[String]>, target: Option<&str>) -> Result<Vec<String>> {
        let names: Vec<String> = match inputs {
            Some(v) => v.to_vec(),
            None => self.columns.iter().filter(|c| Some(c.as_str()) != target).cloned().collect(),
        };
        if names.is_empty() {
            return Err(invalid("no input columns"));
        }
        Ok(names)
    }

    /// Splits into inputs and target.
    pub fn split(&self, inputs: Option<&[String]>, target: &str) -> Result<(Vec<String>, DMatrix<f64>, DVector<f64>)> {
        let t = self.column_index(target)?;
        let names = self.input_names(inputs, Some(target))?;
        if names.iter().any(|n| n == target) {
            return Err(invalid(format!("target column '{target}' is also listed as an input")));
        }
        let x = self.select(&names)?;
        let y = self.values.column(t).into_owned();
        Ok((names, x, y))
    }
}

/// Writes a headed CSV with full-precision numbers.
pub fn write_csv<W: Write>(out: W, header: &[String], columns: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(to_io)?;
    let rows = columns.first().map_or(0, |c| c.len());
    let mut rec = Vec::with_capacity(columns.len());
    for i in 0..rows {
        rec.clear();
        rec.extend(columns.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

fn to_io(e: csv::Error) -> GpError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => GpError::Io(io),
        kind => GpError::Io(std::io::Error::other(format!("{kind:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_splits() {
        let d = Dataset::from_reader("x1, x2 ,y\n1,2,3\n4,5,6\n".as_bytes()).unwrap();
        let (names, x, y) = d.split(None, "y").unwrap();
        assert_eq!(names, ["x1", "x2"]);
        assert_eq!(x[(1, 1)], 5.0);
        assert_eq!(y[0], 3.0);
    }

    #[test]
    fn rejects_bad_values_with_position() {
        let err = Dataset::from_reader("x,y\n1,2\n3,abc\n".as_bytes()).unwrap_err();
        match err {
            GpError::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            e => panic!("{e}"),
        }
        let err = Dataset::from_reader("x,y\n1,NaN\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GpError::Parse { line: 2, column: 2, .. }));
        assert!(Dataset::from_reader("x,y\n1,inf\n".as_bytes()).is_err());
    }

    #[test]
    fn rejects_duplicate_headers_and_ragged_rows() {
        let err = Dataset::from_reader("x,x\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GpError::Parse { line: 1, column: 2, .. }));
        let err = Dataset::from_reader("x,y\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GpError::Parse { line: 3, .. }), "{err}");
    }
}
