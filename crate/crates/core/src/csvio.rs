//! Delimited numeric tables with missing-value tokens.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::matrix::{DenseMatrix, MaskMatrix, MaskedDataset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("parse error at row {row}, column {col}: {msg}")]
    ParseError { row: usize, col: usize, msg: String },
    #[error("non-numeric cell `{value}` at row {row}, column {col}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("table has no data rows")]
    Empty,
    #[error("missing token list is empty")]
    NoMissingTokens,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CsvError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    /// `None` detects a header from the first record.
    pub has_header: Option<bool>,
    pub missing_tokens: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            has_header: None,
            missing_tokens: ["", "NA", "NaN", "nan"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl CsvSchema {
    fn is_missing(&self, cell: &str) -> bool {
        self.missing_tokens.iter().any(|t| t == cell)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub dataset: MaskedDataset,
    pub header: Option<Vec<String>>,
}

fn looks_numeric(record: &::csv::StringRecord, schema: &CsvSchema) -> bool {
    record.iter().all(|c| {
        let c = c.trim();
        schema.is_missing(c) || c.parse::<f64>().is_ok_and(f64::is_finite)
    })
}

pub fn read_csv_from<R: Read>(reader: R, schema: &CsvSchema, name: &str) -> Result<CsvTable> {
    if schema.missing_tokens.is_empty() {
        return Err(CsvError::NoMissingTokens);
    }
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(reader);
    let mut records = rdr.records().enumerate().peekable();
    let mut header = None;
    if let Some((_, first)) = records.peek() {
        let first = first.as_ref().map_err(|e| CsvError::ParseError {
            row: 0,
            col: 0,
            msg: e.to_string(),
        })?;
        let is_header = schema.has_header.unwrap_or_else(|| !looks_numeric(first, schema));
        if is_header {
            header = Some(first.iter().map(|s| s.to_string()).collect());
            records.next();
        }
    }

    let mut values = Vec::new();
    let mut bits = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, rec) in records {
        let rec = rec.map_err(|e| CsvError::ParseError {
            row: line,
            col: 0,
            msg: e.to_string(),
        })?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(CsvError::ParseError {
                row: line,
                col: rec.len(),
                msg: format!("expected {} fields", cols.unwrap_or(0)),
            });
        }
        for (col, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            if schema.is_missing(cell) {
                values.push(0.0);
                bits.push(false);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    values.push(v);
                    bits.push(true);
                }
                _ => {
                    return Err(CsvError::NonNumericCell {
                        row: line,
                        col,
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows += 1;
    }
    let cols = cols.ok_or(CsvError::Empty)?;
    let data = DenseMatrix::from_vec(rows, cols, values).expect("finite values, consistent width");
    let mask = MaskMatrix::from_bits(rows, cols, bits).expect("consistent width");
    let dataset = MaskedDataset::new(data, mask, name).expect("matching shapes");
    Ok(CsvTable { dataset, header })
}

pub fn read_csv(path: &Path, schema: &CsvSchema) -> Result<CsvTable> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_csv_from(File::open(path)?, schema, &name)
}

fn write_rows<W: Write>(
    w: W,
    header: Option<&[String]>,
    rows: usize,
    cols: usize,
    cell: impl Fn(usize, usize) -> Option<f64>,
    missing: &str,
) -> Result<()> {
    let mut wtr = ::csv::Writer::from_writer(w);
    let io = |e: ::csv::Error| CsvError::Io(e.into());
    if let Some(h) = header {
        wtr.write_record(h).map_err(io)?;
    }
    let mut buf = Vec::with_capacity(cols);
    for r in 0..rows {
        buf.clear();
        for c in 0..cols {
            buf.push(match cell(r, c) {
                Some(v) => format!("{v}"),
                None => missing.to_string(),
            });
        }
        wtr.write_record(&buf).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a complete matrix; `{}` formatting of `f64` round-trips exactly.
pub fn write_matrix_to<W: Write>(w: W, m: &DenseMatrix, header: Option<&[String]>) -> Result<()> {
    write_rows(w, header, m.rows(), m.cols(), |r, c| Some(m.get(r, c)), "")
}

/// Writes a dataset; masked cells get the first missing token.
pub fn write_dataset_to<W: Write>(
    w: W,
    ds: &MaskedDataset,
    header: Option<&[String]>,
    schema: &CsvSchema,
) -> Result<()> {
    let missing = schema.missing_tokens.first().ok_or(CsvError::NoMissingTokens)?;
    write_rows(
        w,
        header,
        ds.rows(),
        ds.cols(),
        |r, c| ds.mask.is_observed(r, c).then(|| ds.data.get(r, c)),
        missing,
    )
}

pub fn write_matrix(path: &Path, m: &DenseMatrix, header: Option<&[String]>) -> Result<()> {
    write_matrix_to(File::create(path)?, m, header)
}

pub fn write_dataset(path: &Path, ds: &MaskedDataset, header: Option<&[String]>, schema: &CsvSchema) -> Result<()> {
    write_dataset_to(File::create(path)?, ds, header, schema)
}
