//! CSV and JSON readers/writers shared by the CLI and the harness.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::blocks::BlockCollection;
use crate::error::{Error, Result};
use crate::model::SampleMatrix;

/// Floats in output files: the shortest text that parses back to the same
/// bits, in exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if !x.is_finite() || a == 0.0 || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn reader(path: &Path, has_headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(has_headers).trim(csv::Trim::All).comment(Some(b'#')).from_reader(file))
}

fn parse_cell(path: &Path, row: usize, col: usize, cell: &str) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(path, format!("row {row}, column {col}: {cell:?} is not a finite number")))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::parse(path, e.to_string())
}

/// Reads a numeric table whose optional leading columns are skipped.
/// Returns the header (if requested) and the rows.
type NumericTable = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

fn read_numeric(path: &Path, has_headers: bool, skip: usize) -> Result<NumericTable> {
    let mut rdr = reader(path, has_headers)?;
    let header: Vec<String> = if has_headers {
        rdr.headers().map_err(|e| csv_err(path, e))?.iter().skip(skip).map(str::to_owned).collect()
    } else {
        Vec::new()
    };
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 1 + has_headers as usize;
        if rec.len() <= skip {
            return Err(Error::parse(path, format!("row {line} has no numeric columns")));
        }
        if skip > 0 {
            labels.push(rec[0].to_owned());
        }
        let row = rec
            .iter()
            .enumerate()
            .skip(skip)
            .map(|(c, cell)| parse_cell(path, line, c + 1, cell))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, labels, rows))
}

fn to_matrix(path: &Path, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncol = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncol == 0 {
        return Err(Error::parse(path, "no data rows"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncol) {
        return Err(Error::parse(path, format!("data row {} has {} columns, expected {ncol}", i + 1, rows[i].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncol, |i, j| rows[i][j]))
}

/// Headerless square matrix.
pub fn read_covariance_csv(path: &Path) -> Result<DMatrix<f64>> {
    let (_, _, rows) = read_numeric(path, false, 0)?;
    let m = to_matrix(path, &rows)?;
    if m.nrows() != m.ncols() {
        return Err(Error::parse(path, format!("covariance is {}×{}, not square", m.nrows(), m.ncols())));
    }
    Ok(m)
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = create(path)?;
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Sample matrix with a `y1..yp` header, one observation per row.
pub fn read_samples_csv(path: &Path) -> Result<SampleMatrix> {
    let (_, _, rows) = read_numeric(path, true, 0)?;
    SampleMatrix::new(to_matrix(path, &rows)?)
}

pub fn write_samples_csv(path: &Path, samples: &SampleMatrix) -> Result<()> {
    let mut w = create(path)?;
    let header: Vec<String> = (1..=samples.p()).map(|j| format!("y{j}")).collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    let data = samples.data();
    for i in 0..samples.n() {
        let line: Vec<String> = (0..samples.p()).map(|j| fmt_f64(data[(i, j)])).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A dated table: header `date,<names...>`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedTable {
    pub dates: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_dated_csv(path: &Path) -> Result<DatedTable> {
    let (columns, dates, rows) = read_numeric(path, true, 1)?;
    let values = to_matrix(path, &rows)?;
    if values.ncols() != columns.len() {
        return Err(Error::parse(
            path,
            format!("header names {} value columns, rows have {}", columns.len(), values.ncols()),
        ));
    }
    Ok(DatedTable { dates, columns, values })
}

pub fn read_blocks_json(path: &Path, p: usize) -> Result<BlockCollection> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    BlockCollection::from_json(&text, p).map_err(|e| match e {
        Error::InvalidBlocks(msg) => Error::InvalidBlocks(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0, f64::MIN_POSITIVE, 123456789.12345679] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn samples_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        let s = SampleMatrix::from_rows(&[vec![1.0, -0.1], vec![1.0 / 3.0, 7e-9]]).unwrap();
        write_samples_csv(&path, &s).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("y1,y2\n"));
        assert_eq!(read_samples_csv(&path).unwrap(), s);
    }

    #[test]
    fn covariance_must_be_square() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "1,0\n0,1\n0,0\n").unwrap();
        assert!(matches!(read_covariance_csv(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, "2,0.5\n0.5,1\n").unwrap();
        assert_eq!(read_covariance_csv(&path).unwrap()[(0, 1)], 0.5);
    }

    #[test]
    fn ragged_and_bad_cells_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        std::fs::write(&path, "y1,y2\n1,2\n3\n").unwrap();
        assert!(read_samples_csv(&path).is_err());
        std::fs::write(&path, "y1,y2\n1,NaN\n").unwrap();
        assert!(read_samples_csv(&path).is_err());
        std::fs::write(&path, "y1,y2\n1,abc\n").unwrap();
        let msg = read_samples_csv(&path).unwrap_err().to_string();
        assert!(msg.contains("abc"), "{msg}");
    }

    #[test]
    fn dated_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "date,y1,y2\n2020-01-02,0.1,0.2\n2020-01-03,-0.1,0.0\n").unwrap();
        let t = read_dated_csv(&path).unwrap();
        assert_eq!(t.dates, vec!["2020-01-02", "2020-01-03"]);
        assert_eq!(t.columns, vec!["y1", "y2"]);
        assert_eq!(t.values[(1, 0)], -0.1);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_covariance_csv(Path::new("/nonexistent/cov.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
