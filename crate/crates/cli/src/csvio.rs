//! CSV emission and ingestion with byte-deterministic numeric formatting.
//!
//! Numbers are printed in Rust's shortest round-trip decimal form, so a file
//! read back with `str::parse::<f64>` and re-written comes out byte for byte
//! identical. Fields never contain commas or quotes; the writer enforces
//! that instead of quoting.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// Shortest decimal form of `v` that parses back to exactly `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Strict float parse used when ingesting our own CSV output.
pub fn parse_f64(s: &str) -> Result<f64, io::Error> {
    s.trim()
        .parse()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("bad number {s:?}: {e}")))
}

/// Writes `header` and `rows` to `path` with `\n` line endings. Every cell
/// must be comma- and newline-free.
pub fn write_csv<P, R>(path: P, header: &[&str], rows: R) -> io::Result<()>
where
    P: AsRef<Path>,
    R: IntoIterator<Item = Vec<String>>,
{
    let mut out = String::new();
    push_row(&mut out, header.iter().copied())?;
    for row in rows {
        push_row(&mut out, row.iter().map(String::as_str))?;
    }
    fs::write(path, out)
}

fn push_row<'a>(out: &mut String, cells: impl Iterator<Item = &'a str>) -> io::Result<()> {
    let mut first = true;
    for cell in cells {
        if cell.contains([',', '\n', '"']) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("cell {cell:?} needs quoting, which this writer does not do"),
            ));
        }
        if !first {
            out.push(',');
        }
        let _ = write!(out, "{cell}");
        first = false;
    }
    out.push('\n');
    Ok(())
}

/// Reads a CSV written by [`write_csv`]: returns the header and the data
/// rows as strings.
pub fn read_csv<P: AsRef<Path>>(path: P) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = match lines.next() {
        Some(h) => h.split(',').map(str::to_owned).collect(),
        None => return Err(io::Error::new(io::ErrorKind::InvalidData, "empty CSV file")),
    };
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    Ok((header, rows))
}
