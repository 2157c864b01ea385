//! Plain-text matrix files.
//!
//! ```text
//! gdcert-matrices v1
//! count 2
//! matrix 2 3
//! 1 0.5 -2
//! 0 1e-300 3
//! matrix 1 1
//! 4
//! ```
//!
//! Values use Rust's shortest round-trip `f64` formatting, so a write/read
//! cycle is bit-exact. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::init::Dataset;
use crate::linalg::Matrix;
use crate::network::{Architecture, Params};

pub const MAGIC: &str = "gdcert-matrices v1";

pub fn format_matrices(mats: &[&Matrix]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "count {}", mats.len());
    for m in mats {
        let _ = writeln!(s, "matrix {} {}", m.rows(), m.cols());
        for i in 0..m.rows() {
            let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s
}

pub fn parse_matrices(text: &str) -> Result<Vec<Matrix>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let perr = |line: usize, msg: String| Error::Parse { line, msg };

    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        Some((n, l)) => return Err(perr(n, format!("expected header {MAGIC:?}, found {l:?}"))),
        None => return Err(perr(0, "empty matrix file".into())),
    }
    let count = match lines.next() {
        Some((n, l)) => {
            let rest = l
                .strip_prefix("count ")
                .ok_or_else(|| perr(n, format!("expected `count <k>`, found {l:?}")))?;
            rest.trim()
                .parse::<usize>()
                .map_err(|e| perr(n, format!("bad count: {e}")))?
        }
        None => return Err(perr(0, "missing count line".into())),
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = lines
            .next()
            .ok_or_else(|| perr(0, format!("expected {count} matrices, found {}", out.len())))?;
        let dims: Vec<&str> = l.split_whitespace().collect();
        if dims.len() != 3 || dims[0] != "matrix" {
            return Err(perr(n, format!("expected `matrix <rows> <cols>`, found {l:?}")));
        }
        let rows: usize = dims[1].parse().map_err(|e| perr(n, format!("bad rows: {e}")))?;
        let cols: usize = dims[2].parse().map_err(|e| perr(n, format!("bad cols: {e}")))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rn, rl) = lines
                .next()
                .ok_or_else(|| perr(n, format!("matrix truncated, expected {rows} rows")))?;
            let before = data.len();
            for tok in rl.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|e| perr(rn, format!("bad number {tok:?}: {e}")))?;
                if !v.is_finite() {
                    return Err(perr(rn, format!("non-finite entry {tok:?}")));
                }
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(perr(
                    rn,
                    format!("expected {cols} entries, found {}", data.len() - before),
                ));
            }
        }
        out.push(Matrix::new(rows, cols, data)?);
    }
    if let Some((n, l)) = lines.next() {
        return Err(perr(n, format!("trailing content {l:?}")));
    }
    Ok(out)
}

pub fn write_matrices(path: &Path, mats: &[&Matrix]) -> Result<()> {
    fs::write(path, format_matrices(mats))?;
    Ok(())
}

pub fn read_matrices(path: &Path) -> Result<Vec<Matrix>> {
    parse_matrices(&fs::read_to_string(path)?)
}

/// Writes `x` then `y`.
pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    write_matrices(path, &[&d.x, &d.y])
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut m = read_matrices(path)?;
    if m.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "dataset file must hold 2 matrices, found {}",
            m.len()
        )));
    }
    let y = m.pop().expect("two matrices");
    let x = m.pop().expect("two matrices");
    Dataset::new(x, y, 0)
}

/// Writes `W_1, …, W_L`.
pub fn write_params(path: &Path, p: &Params) -> Result<()> {
    let refs: Vec<&Matrix> = p.weights().iter().collect();
    write_matrices(path, &refs)
}

pub fn read_params(path: &Path, arch: &Architecture) -> Result<Params> {
    Params::new(arch, read_matrices(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let a = Matrix::from_rows(&[&[1.0, 0.1 + 0.2, -2.5e-300], &[f64::MAX, f64::MIN_POSITIVE, -0.0]]);
        let b = Matrix::from_rows(&[&[std::f64::consts::PI]]);
        let text = format_matrices(&[&a, &b]);
        let back = parse_matrices(&text).unwrap();
        assert_eq!(back.len(), 2);
        for (x, y) in a.data().iter().zip(back[0].data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(back[1], b);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# weights\ngdcert-matrices v1\n\ncount 1\nmatrix 1 2\n3 4\n";
        assert_eq!(parse_matrices(text).unwrap()[0], Matrix::from_rows(&[&[3.0, 4.0]]));
    }

    #[test]
    fn malformed_files_report_line() {
        let cases = [
            ("nope\n", 1),
            ("gdcert-matrices v1\ncount 1\nmatrix 1 2\n3\n", 4),
            ("gdcert-matrices v1\ncount 1\nmatrix 1 1\nNaN\n", 4),
            ("gdcert-matrices v1\ncount 1\nmatrix 1 1\nx\n", 4),
            ("gdcert-matrices v1\ncount 0\nextra\n", 3),
        ];
        for (text, line) in cases {
            match parse_matrices(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(parse_matrices("gdcert-matrices v1\ncount 2\nmatrix 1 1\n1\n").is_err());
    }
}
