use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use nb2_core::identity::{grid, GridPoint};
use nb2_core::{DMatrix, Dataset};

use crate::error::CliError;

/// Reads a CSV with a header row into a dataset. Line numbers in error
/// messages count the header as line 1.
pub fn ingest_csv(path: &Path, response: &str, no_intercept: bool) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(CliError::Input(format!("{}: file is empty or has no header row", path.display())));
    }
    let y_col = headers.iter().position(|h| h == response).ok_or_else(|| {
        CliError::Input(format!(
            "{}: response column '{response}' not found; header is [{}]",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let reg_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != y_col).collect();
    let names: Vec<String> = reg_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut y = Vec::new();
    let mut cells = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| CliError::Input(format!("{}: line {line}: {e}", path.display())))?;
        let raw = &record[y_col];
        y.push(parse_count(raw).ok_or_else(|| {
            CliError::Input(format!(
                "{}: line {line}, column {} ('{response}'): '{raw}' is not a non-negative integer count",
                path.display(),
                y_col + 1
            ))
        })?);
        for &c in &reg_cols {
            let raw = &record[c];
            let v: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::Input(format!(
                    "{}: line {line}, column {} ('{}'): '{raw}' is not a finite number",
                    path.display(),
                    c + 1,
                    &headers[c]
                ))
            })?;
            cells.push(v);
        }
    }
    if y.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows after the header", path.display())));
    }
    let x = DMatrix::from_row_slice(y.len(), reg_cols.len(), &cells);
    let ds = if no_intercept { Dataset::new(y, x, names) } else { Dataset::with_intercept(y, x, names) };
    ds.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Accepts plain integers and integral decimals such as `3.0`.
fn parse_count(raw: &str) -> Option<u64> {
    if let Ok(v) = raw.parse::<u64>() {
        return Some(v);
    }
    let v: f64 = raw.parse().ok()?;
    (v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64).then_some(v as u64)
}

/// Writes `y` followed by the non-intercept regressors.
pub fn write_dataset_csv<W: Write>(ds: &Dataset, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let skip = usize::from(ds.has_intercept());
    let mut header = vec!["y".to_string()];
    header.extend(ds.names()[skip..].iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.n() {
        let mut row = vec![ds.y()[i].to_string()];
        row.extend((skip..ds.p()).map(|j| ds.x()[(i, j)].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(CliError::Io)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(io::Error::other(e))
}

/// Parses `counts/params`, each side a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<GridPoint>, CliError> {
    let bad = |msg: &str| CliError::Usage(format!("--grid '{spec}': {msg}; expected e.g. '0,1,2/0.5,1'"));
    let (counts, params) = spec.split_once('/').ok_or_else(|| bad("missing '/'"))?;
    let counts: Vec<u64> = counts
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("counts must be non-negative integers"))?;
    let params: Vec<f64> = params
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("parameters must be numbers"))?;
    if params.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(bad("parameters must be positive"));
    }
    Ok(grid(&counts, &params))
}

/// Writes to the named file, or to standard output.
pub fn emit(path: Option<&Path>, body: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(CliError::Io),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body).and_then(|_| out.flush()).map_err(CliError::Io)
        }
    }
}
