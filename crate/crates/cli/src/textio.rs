//! Plain-text matrix files: a `rows cols` line, then one line per row of
//! space-separated values with 17 significant digits.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hmx_core::linalg::DenseMatrix;

pub fn format_matrix(a: &DenseMatrix) -> String {
    let mut s = format!("{} {}\n", a.rows(), a.cols());
    for i in 0..a.rows() {
        let row: Vec<String> = a.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let mut tokens = text.split_whitespace();
    let mut dim = |what: &str| -> Result<usize> {
        tokens
            .next()
            .with_context(|| format!("missing {what}"))?
            .parse::<usize>()
            .with_context(|| format!("bad {what}"))
    };
    let rows = dim("row count")?;
    let cols = dim("column count")?;
    let data = tokens
        .map(|t| t.parse::<f64>().with_context(|| format!("bad entry {t:?}")))
        .collect::<Result<Vec<f64>>>()?;
    if data.len() != rows * cols {
        bail!("expected {} entries, found {}", rows * cols, data.len());
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        bail!("non-finite entry {v}");
    }
    Ok(DenseMatrix::new(rows, cols, data)?)
}

pub fn write_matrix(path: &Path, a: &DenseMatrix) -> Result<()> {
    fs::write(path, format_matrix(a)).with_context(|| format!("writing {}", path.display()))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_matrix(&text).with_context(|| format!("parsing {}", path.display()))
}
