//! Metrics over run traces and model-level verification tools.

mod fit;
mod observability;
mod recursion;
pub(crate) mod trace;

pub use fit::{fit_decay, RateFit};
pub use observability::{gramian_check, GramianReport, WindowEigen, DEFAULT_LAMBDA_TILDE};
pub use recursion::{linear_recursion_sim, RecursionSources};
pub use trace::{RunTrace, Snapshot, TriggerEvent};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("communication rate undefined: graph has no edges")]
    NoEdges,
    #[error("time {t} outside [1, {horizon}]")]
    TimeOutOfRange { t: u64, horizon: u64 },
    #[error("no traces to aggregate")]
    NoTraces,
    #[error("traces disagree on {0}")]
    Mismatch(&'static str),
    #[error("fit window [{t1}, {t2}] invalid for series of length {len}")]
    BadWindow { t1: u64, t2: u64, len: usize },
    #[error("non-positive value {value} at t={t} in fit window")]
    NonPositive { t: u64, value: f64 },
    #[error("numerical divergence at t={0}")]
    Divergence(u64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// `sum_i K_i(t) |N_i^c| / (t sum_i |N_i^c|)` without clamping. Counting
/// the forced broadcast at `t = 0` makes this `(t+1)/t` when every sensor
/// broadcasts every round.
pub fn communication_rate_raw(trace: &RunTrace, t: u64) -> Result<f64, AnalysisError> {
    if t == 0 || t > trace.horizon {
        return Err(AnalysisError::TimeOutOfRange { t, horizon: trace.horizon });
    }
    let total: usize = trace.child_counts.iter().sum();
    if total == 0 {
        return Err(AnalysisError::NoEdges);
    }
    Ok(trace.messages(t) as f64 / (t as f64 * total as f64))
}

/// Communication rate `lambda_c(t)` clamped to `[0, 1]`.
pub fn communication_rate(trace: &RunTrace, t: u64) -> Result<f64, AnalysisError> {
    communication_rate_raw(trace, t).map(|r| r.min(1.0))
}

/// `lambda_c(t)` for `t = 1..=horizon` (index 0 holds `t = 1`).
pub fn communication_rate_series(trace: &RunTrace) -> Result<Vec<f64>, AnalysisError> {
    let total: u64 = trace.child_counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(AnalysisError::NoEdges);
    }
    // Sweep the event list once instead of bisecting per t.
    let mut out = Vec::with_capacity(trace.horizon as usize);
    let mut sent = 0u64;
    let mut events = trace.events.iter().peekable();
    for t in 0..=trace.horizon {
        while let Some(ev) = events.next_if(|e| e.time <= t) {
            sent += trace.child_counts[ev.sensor] as u64;
        }
        if t > 0 {
            out.push((sent as f64 / (t as f64 * total as f64)).min(1.0));
        }
    }
    Ok(out)
}

/// Mean-square error across runs and sensors:
/// `(1 / (N M_0)) sum_runs sum_i ||x_i(t) - theta||^2`.
pub fn mse(traces: &[RunTrace], t: u64) -> Result<f64, AnalysisError> {
    let first = traces.first().ok_or(AnalysisError::NoTraces)?;
    for tr in traces {
        if tr.n != first.n {
            return Err(AnalysisError::Mismatch("sensor count"));
        }
        if tr.dim != first.dim || tr.theta != first.theta {
            return Err(AnalysisError::Mismatch("parameter"));
        }
        if tr.horizon != first.horizon {
            return Err(AnalysisError::Mismatch("horizon"));
        }
    }
    if t > first.horizon {
        return Err(AnalysisError::TimeOutOfRange { t, horizon: first.horizon });
    }
    let total: f64 = traces.iter().map(|tr| tr.sq_error[t as usize]).sum();
    Ok(total / (first.n as f64 * traces.len() as f64))
}
