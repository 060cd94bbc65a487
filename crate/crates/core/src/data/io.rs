//! LIBSVM and CSV readers/writers and the importance-scores file.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{RawDataset, Task};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Infers the task and maps binary `-1` labels to `0`.
fn dataset_from_parts(features: DenseMatrix, labels: Vec<f64>) -> Result<RawDataset> {
    let task = Task::infer(&labels);
    let mut labels = labels;
    if task == Task::Binary {
        for l in &mut labels {
            if *l == -1.0 {
                *l = 0.0;
            }
        }
    }
    RawDataset::new(features, labels, task)
}

/// Reads `label idx:val idx:val ...` lines with 1-based, strictly increasing
/// indices. Absent indices are zero; the width is the largest index seen.
/// Blank lines and `#` comments are skipped.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<RawDataset> {
    let path = path.as_ref();
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut width = 0;
    for (lineno, line) in open(path)?.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(parse_err(path, lineno, format!("non-finite label {label_tok:?}")));
        }
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(path, lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad feature index in {tok:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad feature value in {tok:?}")))?;
            if idx == 0 {
                return Err(parse_err(path, lineno, "feature indices are 1-based"));
            }
            if idx <= last {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("feature index {idx} does not increase (previous {last})"),
                ));
            }
            if !val.is_finite() {
                return Err(parse_err(path, lineno, format!("non-finite value in {tok:?}")));
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        width = width.max(last);
        labels.push(label);
        rows.push(entries);
    }
    let mut features = DenseMatrix::zeros(rows.len(), width);
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            features.set(r, c, v);
        }
    }
    dataset_from_parts(features, labels)
}

/// Reads a headed CSV of numbers; `label_column` names the label column,
/// which is removed from the features.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<RawDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let header = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| parse_err(path, 1, format!("no column named {label_column:?}")))?;
    let m = header.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("column {} ({:?}): not a number: {cell:?}", c + 1, &header[c]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column {}: non-finite value", c + 1)));
            }
            if c == label_idx {
                labels.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(parse_err(path, 1, "no data rows after the header"));
    }
    dataset_from_parts(DenseMatrix::from_vec(labels.len(), m, data)?, labels)
}

/// Writes `ds` in LIBSVM form, omitting zeros. Values use shortest
/// round-trip formatting, so reloading reproduces the matrix exactly as long
/// as the last column has a nonzero somewhere.
pub fn write_libsvm(ds: &RawDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (row, label) in ds.features.row_iter().zip(&ds.labels) {
        out.push_str(&label.to_string());
        for (c, v) in row.iter().enumerate() {
            if *v != 0.0 {
                out.push_str(&format!(" {}:{}", c + 1, v));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `ds` as CSV with columns `f0..f{m-1},label`.
pub fn write_csv(ds: &RawDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("writing {}: {e}", path.display()));
    let mut header: Vec<String> = (0..ds.m()).map(|c| format!("f{c}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for (row, label) in ds.features.row_iter().zip(&ds.labels) {
        let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
        rec.push(label.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One real per line, in feature order. Blank lines are ignored.
pub fn load_importance_file(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut scores = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("not a number: {t:?}")))?;
        if !v.is_finite() {
            return Err(parse_err(path, i + 1, "non-finite importance"));
        }
        scores.push(v);
    }
    Ok(scores)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
