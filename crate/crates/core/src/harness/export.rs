//! CSV writers. Every file has a header row; floats use Rust's shortest
//! round-trip formatting so identical runs give identical bytes.

use std::io::Write;
use std::path::Path;

use super::{HarnessError, MonteCarloResult};
use crate::analysis::{communication_rate_series, RunTrace};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn coord_header(prefix: &[&str], dim: usize) -> Vec<String> {
    prefix.iter().map(|s| s.to_string()).chain((1..=dim).map(|k| format!("x_{k}"))).collect()
}

/// `t,mse,lambda_c`; `lambda_c` is blank at `t = 0` and on edgeless graphs.
pub fn write_aggregate(path: &Path, res: &MonteCarloResult) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["t", "mse", "lambda_c"])?;
    for (t, m) in res.mse.iter().enumerate() {
        let lc = if t == 0 { String::new() } else { res.lambda_c.get(t - 1).map_or(String::new(), f64::to_string) };
        w.write_record([t.to_string(), m.to_string(), lc])?;
    }
    w.flush()?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn write_runs(path: &Path, res: &MonteCarloResult) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record([
        "run",
        "seed",
        "final_sq_error",
        "final_max_abs_error",
        "messages",
        "final_lambda_c",
        "saturated_until",
        "rate_exponent",
    ])?;
    for r in &res.runs {
        w.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            r.final_sq_error.to_string(),
            r.final_max_abs_error.to_string(),
            r.messages.to_string(),
            opt(r.final_lambda_c),
            r.saturated_until.to_string(),
            opt(r.rate_exponent),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,sensor,x_1..x_M` with run-averaged estimates; rows with sensor `mean`
/// hold the network average.
pub fn write_mean_estimates(path: &Path, res: &MonteCarloResult) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(coord_header(&["t", "sensor"], res.dim))?;
    for (snap, (_, grand)) in res.mean_estimates.iter().zip(&res.grand_mean) {
        for (i, x) in snap.estimates.iter().enumerate() {
            let mut row = vec![snap.t.to_string(), (i + 1).to_string()];
            row.extend(x.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        let mut row = vec![snap.t.to_string(), "mean".to_string()];
        row.extend(grand.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,mse,lambda_c` for a single trace (`mse` is the squared error over `N`).
pub fn write_trace_series(path: &Path, trace: &RunTrace) -> Result<(), HarnessError> {
    let lambda = communication_rate_series(trace).unwrap_or_default();
    let mut w = writer(path)?;
    w.write_record(["t", "mse", "lambda_c"])?;
    for (t, e) in trace.sq_error.iter().enumerate() {
        let lc = if t == 0 { String::new() } else { lambda.get(t - 1).map_or(String::new(), f64::to_string) };
        w.write_record([t.to_string(), (e / trace.n as f64).to_string(), lc])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,sensor,event`: one row per broadcast, `event` is the sensor's
/// running broadcast count. Sensors are 1-based.
pub fn write_triggers(path: &Path, trace: &RunTrace) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(["t", "sensor", "event"])?;
    let mut counts = vec![0u64; trace.n];
    for ev in &trace.events {
        counts[ev.sensor] += 1;
        w.write_record([ev.time.to_string(), (ev.sensor + 1).to_string(), counts[ev.sensor].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,sensor,x_1..x_M` from the trace snapshots.
pub fn write_trace_estimates(path: &Path, trace: &RunTrace) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(coord_header(&["t", "sensor"], trace.dim))?;
    for snap in &trace.snapshots {
        for (i, x) in snap.estimates.iter().enumerate() {
            let mut row = vec![snap.t.to_string(), (i + 1).to_string()];
            row.extend(x.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One column of MSE per compared algorithm.
pub fn write_comparison(path: &Path, results: &[MonteCarloResult]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(results.iter().map(|r| r.label.clone()));
    w.write_record(&header)?;
    let len = results.iter().map(|r| r.mse.len()).min().unwrap_or(0);
    for t in 0..len {
        let mut row = vec![t.to_string()];
        row.extend(results.iter().map(|r| r.mse[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Reads column `col` of a CSV file as a series indexed by time. Uses the
/// `t` column for indices when present, otherwise the row number.
pub fn read_series(path: &Path, col: &str) -> Result<Vec<f64>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let c = find(col).ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("no column `{col}` in {}", path.display()))
    })?;
    let tcol = find("t");
    let mut series: Vec<f64> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let t = match tcol {
            Some(k) => rec[k].trim().parse::<usize>().map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("row {}: bad t: {e}", row + 1))
            })?,
            None => row,
        };
        let field = rec[c].trim();
        let v = if field.is_empty() {
            f64::NAN
        } else {
            field.parse::<f64>().map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("row {}: bad value: {e}", row + 1))
            })?
        };
        if series.len() <= t {
            series.resize(t + 1, f64::NAN);
        }
        series[t] = v;
    }
    Ok(series)
}
