//! CSV output shared by the harness, sample export and dependence graphs.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
///
/// Ordinary magnitudes use positional notation, tiny and huge ones scientific.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// One row of an MSE report.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub experiment: String,
    pub method: String,
    pub kernel: String,
    pub sweeps: usize,
    pub inner_steps: usize,
    pub sigma: f64,
    /// Counted target evaluations per full-conditional, averaged over runs.
    pub evaluations: f64,
    pub runs: usize,
    /// `NaN` marks a sweep point that failed.
    pub mse: f64,
    pub wall_time_s: f64,
}

pub const MSE_HEADER: &str = "experiment,method,kernel,T,M,sigma,E,runs,mse,wall_time_s";

impl MseRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.method,
            self.kernel,
            self.sweeps,
            self.inner_steps,
            fmt_f64(self.sigma),
            fmt_f64(self.evaluations),
            self.runs,
            fmt_f64(self.mse),
            fmt_f64(self.wall_time_s)
        )
    }
}

/// Header plus one line per row, LF-terminated.
pub fn mse_csv_string(rows: &[MseRow]) -> String {
    let mut s = String::from(MSE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}

/// Parses an MSE report produced by [`mse_csv_string`].
pub fn parse_mse_csv(text: &str) -> Result<Vec<MseRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != MSE_HEADER {
        return Err(Error::Parse(format!("unexpected MSE header {header:?}")));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Parse(format!("bad {what} value {s:?}")))
    };
    let int = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| Error::Parse(format!("bad {what} value {s:?}")))
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        rows.push(MseRow {
            experiment: rec[0].to_string(),
            method: rec[1].to_string(),
            kernel: rec[2].to_string(),
            sweeps: int(&rec[3], "T")?,
            inner_steps: int(&rec[4], "M")?,
            sigma: num(&rec[5], "sigma")?,
            evaluations: num(&rec[6], "E")?,
            runs: int(&rec[7], "runs")?,
            mse: num(&rec[8], "mse")?,
            wall_time_s: num(&rec[9], "wall_time_s")?,
        });
    }
    Ok(rows)
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
