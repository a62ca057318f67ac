//! CSV ingestion: one sample per row, 64-bit floats.

use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Reads a numeric CSV into an `n × l` row-major matrix.
pub fn read_csv<R: Read>(reader: R, skip_header: bool) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(skip_header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Input(format!("csv: {e}")))?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Input(format!(
                    "csv line {line}: expected {w} fields, found {}",
                    record.len()
                )))
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Input(format!("csv line {line}, column {}: cannot parse `{field}`", col + 1)))?;
            if !v.is_finite() {
                return Err(Error::Input(format!("csv line {line}, column {}: non-finite value", col + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    Array2::from_shape_vec((rows, width), values).map_err(|e| Error::Input(e.to_string()))
}

pub fn read_csv_file(path: &Path, skip_header: bool) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    read_csv(file, skip_header).map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes a matrix as headerless CSV with round-trippable floats.
pub fn write_csv<W: std::io::Write>(data: &Array2<f64>, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in data.rows() {
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
