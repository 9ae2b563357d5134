//! Plain-text matrix files.
//!
//! The first line holds `rows cols`; each following line is one row of
//! whitespace-separated decimals. Values are written in the shortest form
//! that parses back to the same `f64`, so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> std::result::Result<DenseMatrix, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty file")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| format!("bad header {header:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [rows, cols] = dims[..] else {
        return Err(format!("header must be `rows cols`, got {header:?}"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|e| format!("row {i}: bad value {tok:?}: {e}"))?,
            );
        }
        if data.len() - before != cols {
            return Err(format!(
                "row {i} has {} values, expected {cols}",
                data.len() - before
            ));
        }
    }
    if data.len() != rows * cols {
        return Err(format!(
            "expected {rows} rows, found {}",
            data.len() / cols.max(1)
        ));
    }
    DenseMatrix::from_row_major(rows, cols, data).map_err(|e| e.to_string())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix(&text).map_err(|reason| Error::Parse {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix(m)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
