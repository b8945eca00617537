//! Paired-sample and labeled CSV files.
//!
//! Paired files carry a header `s_0,...,s_{d-1},t_0,...,t_{d-1}`; labeled
//! files carry `x_0,...,x_{d-1},label`. Rows are numbered from 1 starting
//! at the first data row. Values are written with 17 significant digits,
//! which reads back to the same bits.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use depmax_core::data::LabeledSet;
use depmax_core::{Matrix, SampleBatch};

use crate::error::{CliError, Result};

/// `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn input_err(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn row_err(path: &Path, row: usize, msg: impl Into<String>) -> CliError {
    CliError::Row {
        path: path.to_path_buf(),
        row,
        msg: msg.into(),
    }
}

fn headers(path: &Path, reader: &mut csv::Reader<File>) -> Result<Vec<String>> {
    let h = reader
        .headers()
        .map_err(|e| input_err(path, format!("unreadable header: {e}")))?;
    Ok(h.iter().map(|s| s.trim().to_string()).collect())
}

fn expect_header(path: &Path, got: &[String], want: &[String]) -> Result<()> {
    if got != want {
        return Err(input_err(
            path,
            format!("header `{}` does not match expected `{}`", got.join(","), want.join(",")),
        ));
    }
    Ok(())
}

fn parse_cell(path: &Path, row: usize, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| row_err(path, row, format!("column {column}: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(row_err(path, row, format!("column {column}: non-finite value `{cell}`")));
    }
    Ok(v)
}

/// Reads every data row as numbers, calling `cell` for each field.
fn read_rows(
    path: &Path,
    reader: &mut csv::Reader<File>,
    header: &[String],
    mut cell: impl FnMut(usize, usize, &str) -> Result<()>,
) -> Result<usize> {
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| row_err(path, row, e.to_string()))?;
        if record.len() != header.len() {
            return Err(row_err(
                path,
                row,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (c, field) in record.iter().enumerate() {
            cell(row, c, field)?;
        }
        rows = row;
    }
    if rows == 0 {
        return Err(input_err(path, "no data rows"));
    }
    Ok(rows)
}

pub fn paired_header(d: usize) -> Vec<String> {
    (0..d)
        .map(|j| format!("s_{j}"))
        .chain((0..d).map(|j| format!("t_{j}")))
        .collect()
}

pub fn labeled_header(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x_{j}")).chain(["label".to_string()]).collect()
}

pub fn load_paired_csv(path: &Path) -> Result<(SampleBatch, SampleBatch)> {
    let mut reader = open(path)?;
    let header = headers(path, &mut reader)?;
    if header.len() < 2 || header.len() % 2 != 0 {
        return Err(input_err(path, format!("paired header needs 2d columns, got {}", header.len())));
    }
    let d = header.len() / 2;
    expect_header(path, &header, &paired_header(d))?;
    let mut s = Vec::new();
    let mut t = Vec::new();
    let n = read_rows(path, &mut reader, &header, |row, c, field| {
        let v = parse_cell(path, row, &header[c], field)?;
        if c < d {
            s.push(v);
        } else {
            t.push(v);
        }
        Ok(())
    })?;
    let s = SampleBatch::new(Matrix::from_vec(n, d, s)?)?;
    let t = SampleBatch::new(Matrix::from_vec(n, d, t)?)?;
    Ok((s, t))
}

/// Reads a labeled file; the class count is one more than the largest label,
/// and at least 2.
pub fn load_labeled_csv(path: &Path) -> Result<LabeledSet> {
    let mut reader = open(path)?;
    let header = headers(path, &mut reader)?;
    if header.len() < 2 {
        return Err(input_err(path, "labeled header needs at least one feature and `label`"));
    }
    let d = header.len() - 1;
    expect_header(path, &header, &labeled_header(d))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let n = read_rows(path, &mut reader, &header, |row, c, field| {
        if c < d {
            features.push(parse_cell(path, row, &header[c], field)?);
        } else {
            let label: usize = field
                .trim()
                .parse()
                .map_err(|_| row_err(path, row, format!("label `{field}` is not a non-negative integer")))?;
            labels.push(label);
        }
        Ok(())
    })?;
    let classes = labels.iter().copied().max().unwrap_or(0).max(1) + 1;
    Ok(LabeledSet::new(Matrix::from_vec(n, d, features)?, labels, classes)?)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn write_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Write {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_paired_csv(path: &Path, s: &Matrix, t: &Matrix) -> Result<()> {
    if s.shape() != t.shape() {
        return Err(CliError::Usage(format!(
            "paired batches differ in shape: {:?} vs {:?}",
            s.shape(),
            t.shape()
        )));
    }
    let mut w = writer(path)?;
    w.write_record(paired_header(s.cols())).map_err(write_err(path))?;
    for i in 0..s.rows() {
        let rec = s.row(i).iter().chain(t.row(i)).map(|v| fmt_f64(*v));
        w.write_record(rec).map_err(write_err(path))?;
    }
    finish(path, w)
}

pub fn write_labeled_csv(path: &Path, set: &LabeledSet) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(labeled_header(set.dim())).map_err(write_err(path))?;
    for i in 0..set.len() {
        let rec = set
            .features
            .row(i)
            .iter()
            .map(|v| fmt_f64(*v))
            .chain([set.labels[i].to_string()]);
        w.write_record(rec).map_err(write_err(path))?;
    }
    finish(path, w)
}

/// Writes `contents` to `path`, creating or truncating it.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    File::create(path)
        .and_then(|mut f| f.write_all(contents.as_bytes()))
        .map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })
}
