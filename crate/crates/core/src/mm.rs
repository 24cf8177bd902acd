//! Matrix Market coordinate files.
//!
//! Supported headers are `%%MatrixMarket matrix coordinate real|integer
//! general|symmetric`. Indices are 1-based in the file and 0-based in memory.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::sparse::{CooMatrix, Element, SparseError};

#[derive(Debug, Error)]
pub enum MatrixMarketError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Element {
        line: usize,
        #[source]
        source: SparseError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> MatrixMarketError {
    MatrixMarketError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_header(line: &str, lineno: usize) -> Result<Symmetry, MatrixMarketError> {
    let tokens: Vec<String> = line
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(parse_err(
            lineno,
            "expected '%%MatrixMarket matrix coordinate <field> <symmetry>'",
        ));
    }
    if tokens[1] != "matrix" {
        return Err(parse_err(
            lineno,
            format!("unsupported object '{}'", tokens[1]),
        ));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(
            lineno,
            format!("unsupported format '{}'", tokens[2]),
        ));
    }
    match tokens[3].as_str() {
        "real" | "integer" => {}
        other => return Err(parse_err(lineno, format!("unsupported field '{other}'"))),
    }
    match tokens[4].as_str() {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        other => Err(parse_err(lineno, format!("unsupported symmetry '{other}'"))),
    }
}

fn parse_usize(tok: Option<&str>, what: &str, lineno: usize) -> Result<usize, MatrixMarketError> {
    let tok = tok.ok_or_else(|| parse_err(lineno, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(lineno, format!("invalid {what} '{tok}'")))
}

/// Reads a coordinate Matrix Market stream. Symmetric files are expanded to
/// general form; the result is sorted lexicographically.
pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<CooMatrix, MatrixMarketError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (lineno, header) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => return Err(parse_err(1, "empty input")),
    };
    let symmetry = parse_header(&header, lineno)?;

    let mut size: Option<(usize, usize, usize)> = None;
    let mut elements = Vec::new();
    let mut seen = 0usize;
    let mut last_line = lineno;

    for (lineno, line) in lines {
        let line = line?;
        last_line = lineno;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let Some((m, n, nnz)) = size else {
            let m = parse_usize(toks.next(), "row count", lineno)?;
            let n = parse_usize(toks.next(), "column count", lineno)?;
            let nnz = parse_usize(toks.next(), "entry count", lineno)?;
            if toks.next().is_some() {
                return Err(parse_err(lineno, "trailing tokens on size line"));
            }
            if symmetry == Symmetry::Symmetric && m != n {
                return Err(parse_err(lineno, "symmetric matrix must be square"));
            }
            size = Some((m, n, nnz));
            elements.reserve(nnz);
            continue;
        };

        if seen == nnz {
            return Err(parse_err(
                lineno,
                format!("more than the declared {nnz} entries"),
            ));
        }
        let i = parse_usize(toks.next(), "row index", lineno)?;
        let j = parse_usize(toks.next(), "column index", lineno)?;
        let vtok = toks
            .next()
            .ok_or_else(|| parse_err(lineno, "missing value"))?;
        let val: f64 = vtok
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid value '{vtok}'")))?;
        if toks.next().is_some() {
            return Err(parse_err(lineno, "trailing tokens on entry line"));
        }
        if i == 0 || j == 0 || i > m || j > n {
            return Err(parse_err(
                lineno,
                format!("index ({i}, {j}) outside 1..={m} x 1..={n}"),
            ));
        }
        if val == 0.0 || !val.is_finite() {
            return Err(parse_err(
                lineno,
                format!("explicit zero or non-finite value '{vtok}'"),
            ));
        }
        elements.push((lineno, Element::new(i - 1, j - 1, val)));
        if symmetry == Symmetry::Symmetric && i != j {
            elements.push((lineno, Element::new(j - 1, i - 1, val)));
        }
        seen += 1;
    }

    let Some((m, n, nnz)) = size else {
        return Err(parse_err(last_line, "missing size line"));
    };
    if seen != nnz {
        return Err(parse_err(
            last_line,
            format!("declared {nnz} entries, found {seen}"),
        ));
    }

    // Locate duplicates by line before handing over to the matrix constructor.
    elements.sort_by_key(|(_, e)| e.key());
    if let Some(w) = elements.windows(2).find(|w| w[0].1.key() == w[1].1.key()) {
        let line = w[0].0.max(w[1].0);
        return Err(MatrixMarketError::Element {
            line,
            source: SparseError::Duplicate {
                row: w[1].1.row,
                col: w[1].1.col,
            },
        });
    }
    let elements = elements.into_iter().map(|(_, e)| e).collect();
    CooMatrix::new(m, n, elements).map_err(|source| MatrixMarketError::Element { line: 0, source })
}

/// Formats a value so that parsing it back yields the same bits.
pub(crate) fn format_value(v: f64) -> String {
    let a = v.abs();
    if (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes a general real coordinate file.
pub fn write_matrix_market<W: Write>(mut w: W, matrix: &CooMatrix) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", matrix.rows(), matrix.cols(), matrix.nnz())?;
    for e in matrix.elements() {
        writeln!(w, "{} {} {}", e.row + 1, e.col + 1, format_value(e.val))?;
    }
    w.flush()
}
