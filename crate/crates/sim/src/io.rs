//! CSV input and output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use domkl_core::data::Dataset;

use crate::error::{SimError, SimResult};
use crate::simulator::{AggregateResult, SweepRow};

fn io_err(path: &Path, source: std::io::Error) -> SimError {
    SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a numeric CSV. Column `label_column` becomes the label and the
/// remaining columns, in file order, the features.
pub fn load_csv(path: &Path, label_column: usize, has_header: bool) -> SimResult<Dataset> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if label_column >= record.len() {
            return Err(SimError::Parse {
                path: path.to_path_buf(),
                line,
                column: label_column + 1,
                message: format!("row has only {} columns", record.len()),
            });
        }
        let mut row = Vec::with_capacity(record.len().saturating_sub(1));
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| SimError::Parse {
                path: path.to_path_buf(),
                line,
                column: j + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if j == label_column {
                labels.push(v);
            } else {
                row.push(v);
            }
        }
        features.push(row);
    }
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_owned(), |s| s.to_string_lossy().into_owned());
    Ok(Dataset::new(name, features, labels)?)
}

/// One column of a CSV as a series, for time-series tasks.
pub fn load_series(path: &Path, column: usize, has_header: bool) -> SimResult<Vec<f64>> {
    Ok(load_csv(path, column, has_header)?.labels)
}

pub const RESULTS_HEADER: [&str; 6] = ["algorithm", "t", "mse_mean", "mse_std", "cv_mean", "cv_std"];
pub const SWEEP_HEADER: [&str; 5] = ["algorithm", "eta_g", "rho", "final_mse", "final_cv"];

/// One row per algorithm and round, `t` counted from 1.
pub fn write_results<W: Write>(out: W, result: &AggregateResult) -> SimResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for a in &result.algorithms {
        for t in 0..a.mse_mean.len() {
            w.write_record([
                a.name.clone(),
                (t + 1).to_string(),
                a.mse_mean[t].to_string(),
                a.mse_std[t].to_string(),
                a.cv_mean[t].to_string(),
                a.cv_std[t].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| io_err(Path::new("<results>"), e))?;
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> SimResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.eta_g.to_string(),
            r.rho.to_string(),
            r.final_mse.to_string(),
            r.final_cv.to_string(),
        ])?;
    }
    w.flush().map_err(|e| io_err(Path::new("<sweep>"), e))?;
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> SimResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}
