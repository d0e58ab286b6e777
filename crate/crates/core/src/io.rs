//! CSV helpers shared by the library and the CLI. Floats are written in the
//! shortest form that round-trips.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Write equal-length columns under a one-line header.
pub fn write_columns<W: Write>(w: W, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    if headers.len() != columns.len() {
        return Err(Error::SizeMismatch(headers.len(), columns.len()));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
        return Err(Error::SizeMismatch(rows, bad.len()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(headers)?;
    let mut record = Vec::with_capacity(columns.len());
    for i in 0..rows {
        record.clear();
        record.extend(columns.iter().map(|c| c[i].to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_column<W: Write>(w: W, header: &str, values: &[f64]) -> Result<()> {
    write_columns(w, &[header], &[values])
}

/// Read all columns of a headered numeric CSV, returning the header and the columns.
pub fn read_columns<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut cols = vec![Vec::new(); headers.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                rec.len(),
                headers.len()
            )));
        }
        for (col, field) in cols.iter_mut().zip(rec.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {}: not a number: {field:?}", line + 2)))?;
            col.push(v);
        }
    }
    Ok((headers, cols))
}

/// Read the first column of a headered CSV.
pub fn read_column<R: Read>(r: R) -> Result<Vec<f64>> {
    let (_, mut cols) = read_columns(r)?;
    if cols.is_empty() {
        return Err(Error::EmptyInput("csv columns"));
    }
    Ok(cols.swap_remove(0))
}
