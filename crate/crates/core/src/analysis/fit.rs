use super::AnalysisError;

/// Least-squares fit of `log value = intercept + exponent * log t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub t1: u64,
    pub t2: u64,
    pub exponent: f64,
    pub log_intercept: f64,
    pub residual_rms: f64,
}

/// Fits a power law to `series[t]` over `t in [t1, t2]`. `series` is
/// indexed by time; every value in the window must be positive.
pub fn fit_decay(series: &[f64], t1: u64, t2: u64) -> Result<RateFit, AnalysisError> {
    if t1 == 0 || t2 <= t1 || t2 as usize >= series.len() {
        return Err(AnalysisError::BadWindow { t1, t2, len: series.len() });
    }
    let mut pts = Vec::with_capacity((t2 - t1 + 1) as usize);
    for t in t1..=t2 {
        let v = series[t as usize];
        if !(v > 0.0) || !v.is_finite() {
            return Err(AnalysisError::NonPositive { t, value: v });
        }
        pts.push(((t as f64).ln(), v.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let log_intercept = my - exponent * mx;
    let residual_rms = (pts.iter().map(|p| (p.1 - log_intercept - exponent * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit { t1, t2, exponent, log_intercept, residual_rms })
}
