//! Small helpers for the tab-separated files every stage reads and writes.
//!
//! All tabular artifacts are TSV with a header row. Cell values may not
//! contain tabs or newlines; writers reject them rather than quote.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::process;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TsvError {
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: column {column}: {message}")]
    Cell {
        line: usize,
        column: &'static str,
        message: String,
    },
    #[error("missing header row")]
    MissingHeader,
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch { expected: String, found: String },
    #[error("cell value contains a tab or newline: {0:?}")]
    IllegalCell(String),
}

/// One parsed data row: the 1-based line number and its cells.
pub struct Row<'a> {
    pub line: usize,
    pub cells: Vec<&'a str>,
}

/// Parse a TSV document, checking the header and per-row column count.
pub fn parse<'a>(text: &'a str, header: &[&str]) -> Result<Vec<Row<'a>>, TsvError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(TsvError::MissingHeader)?;
    let expected_header = header.join("\t");
    if first != expected_header {
        return Err(TsvError::HeaderMismatch {
            expected: expected_header,
            found: first.to_string(),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != header.len() {
            return Err(TsvError::ColumnCount {
                line: idx + 1,
                expected: header.len(),
                found: cells.len(),
            });
        }
        rows.push(Row {
            line: idx + 1,
            cells,
        });
    }
    Ok(rows)
}

/// Incremental TSV writer producing a deterministic string.
pub struct Writer {
    out: String,
    columns: usize,
}

impl Writer {
    pub fn new(header: &[&str]) -> Self {
        let mut out = String::new();
        out.push_str(&header.join("\t"));
        out.push('\n');
        Writer {
            out,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[&str]) -> Result<(), TsvError> {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, cell) in cells.iter().enumerate() {
            if cell.contains('\t') || cell.contains('\n') {
                return Err(TsvError::IllegalCell(cell.to_string()));
            }
            if i > 0 {
                self.out.push('\t');
            }
            self.out.push_str(cell);
        }
        self.out.push('\n');
        Ok(())
    }

    pub fn finish(self) -> String {
        self.out
    }
}

pub fn parse_cell<T: std::str::FromStr>(
    row: &Row<'_>,
    index: usize,
    column: &'static str,
) -> Result<T, TsvError>
where
    T::Err: std::fmt::Display,
{
    row.cells[index].parse().map_err(|e| TsvError::Cell {
        line: row.line,
        column,
        message: format!("{e}"),
    })
}

/// Format a float with the shortest representation that round-trips.
pub fn fmt_f64(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v}").unwrap();
    s
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write a file atomically: the content lands under a temporary name in the
/// same directory and is renamed into place, so readers never observe a
/// partially written artifact.
pub fn write_atomic(path: &Path, content: &str) -> io::Result<()> {
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let mut tmp_name = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    tmp_name.push_str(&format!(".{}.{}.tmp", process::id(), n));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, content)?;
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}
