//! Matrix Market reader and writer for dense matrices.
//!
//! Writing always produces the `array real general` layout with 17 significant
//! digits, so a write/read cycle reproduces every entry bit for bit. Reading
//! accepts both `array` and `coordinate` layouts with `general`, `symmetric`
//! or `skew-symmetric` symmetry and `real` or `integer` fields.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Array,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_string(m: &Matrix) -> String {
    let mut out = String::with_capacity(24 * m.len() + 64);
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for v in m.iter() {
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}

pub fn write(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    fs::write(path, to_string(m))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Matrix> {
    from_str(&fs::read_to_string(path)?)
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn from_str(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    let layout = match tokens[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(parse_err(1, format!("unsupported layout `{other}`"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(parse_err(1, format!("unsupported field `{other}`"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(size_line, e.to_string()))?;

    let number = |line: usize, tok: &str| -> Result<f64> {
        let v: f64 = tok
            .parse()
            .map_err(|_| parse_err(line, format!("bad number `{tok}`")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(parse_err(line, "non-finite entry"))
        }
    };

    match layout {
        Layout::Array => {
            if dims.len() != 2 {
                return Err(parse_err(size_line, "array size line needs `rows cols`"));
            }
            let (rows, cols) = (dims[0], dims[1]);
            if symmetry != Symmetry::General && rows != cols {
                return Err(parse_err(size_line, "symmetric storage needs a square matrix"));
            }
            let mut m = Matrix::zeros(rows, cols);
            let mut slots = Vec::with_capacity(rows * cols);
            for j in 0..cols {
                let start = match symmetry {
                    Symmetry::General => 0,
                    Symmetry::Symmetric => j,
                    Symmetry::SkewSymmetric => j + 1,
                };
                for i in start..rows {
                    slots.push((i, j));
                }
            }
            let mut values = Vec::with_capacity(slots.len());
            for (line, l) in body {
                for tok in l.split_whitespace() {
                    values.push(number(line, tok)?);
                }
            }
            if values.len() != slots.len() {
                return Err(parse_err(
                    size_line,
                    format!("expected {} values, found {}", slots.len(), values.len()),
                ));
            }
            for ((i, j), v) in slots.into_iter().zip(values) {
                m[(i, j)] = v;
                mirror(&mut m, symmetry, i, j, v);
            }
            Ok(m)
        }
        Layout::Coordinate => {
            if dims.len() != 3 {
                return Err(parse_err(size_line, "coordinate size line needs `rows cols nnz`"));
            }
            let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
            let mut m = Matrix::zeros(rows, cols);
            let mut seen = 0;
            for (line, l) in body {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(parse_err(line, "coordinate entry needs `i j value`"));
                }
                let i: usize = t[0].parse().map_err(|_| parse_err(line, "bad row index"))?;
                let j: usize = t[1].parse().map_err(|_| parse_err(line, "bad column index"))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(parse_err(line, "index out of range"));
                }
                let v = number(line, t[2])?;
                m[(i - 1, j - 1)] += v;
                mirror(&mut m, symmetry, i - 1, j - 1, v);
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(
                    size_line,
                    format!("expected {nnz} entries, found {seen}"),
                ));
            }
            Ok(m)
        }
    }
}

fn mirror(m: &mut Matrix, symmetry: Symmetry, i: usize, j: usize, v: f64) {
    if i == j {
        return;
    }
    match symmetry {
        Symmetry::General => {}
        Symmetry::Symmetric => m[(j, i)] = v,
        Symmetry::SkewSymmetric => m[(j, i)] = -v,
    }
}
