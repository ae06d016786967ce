//! Matrix and vector CSV files: one header line, then numeric rows.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn read_matrix<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let width = rdr.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Shape(format!("row {} has {} fields, header has {width}", i + 1, rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {} column {}: '{field}' is not a number", i + 1, j + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, width, &data))
}

/// Reads a single-column file.
pub fn read_vector<R: Read>(reader: R) -> Result<DVector<f64>> {
    let m = read_matrix(reader)?;
    if m.ncols() != 1 {
        return Err(Error::Shape(format!("expected one column, found {}", m.ncols())));
    }
    Ok(m.column(0).into_owned())
}

/// Writes `m` with header `prefix1, prefix2, ...`.
pub fn write_matrix<W: Write>(writer: W, m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record((1..=m.ncols()).map(|j| format!("{prefix}{j}")))?;
    for row in m.row_iter() {
        // `{:?}` on f64 is the shortest representation that round-trips.
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_vector<W: Write>(writer: W, v: &DVector<f64>, name: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([name])?;
    for x in v.iter() {
        wtr.write_record([format!("{x:?}")])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_matrix(std::fs::File::open(path)?)
}

pub fn read_vector_file(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    read_vector(std::fs::File::open(path)?)
}

pub fn write_matrix_file(path: impl AsRef<Path>, m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    write_matrix(std::io::BufWriter::new(std::fs::File::create(path)?), m, prefix)
}

pub fn write_vector_file(path: impl AsRef<Path>, v: &DVector<f64>, name: &str) -> Result<()> {
    write_vector(std::io::BufWriter::new(std::fs::File::create(path)?), v, name)
}
