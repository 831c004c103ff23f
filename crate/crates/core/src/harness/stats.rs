//! Percentiles and least-squares fits for experiment summaries.

use serde::Serialize;
use thiserror::Error;

use crate::norm::Norm;
use crate::randnet::AttackRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{got} points given, at least {min} needed")]
    TooFewPoints { got: usize, min: usize },
    #[error("value {value} at index {index} is not positive")]
    NonPositive { index: usize, value: f64 },
    #[error("abscissae are all equal")]
    Degenerate,
}

/// Percentile `q` in `[0, 1]` of sorted data, interpolating linearly between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn sorted(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<LinearFit, StatsError> {
    let n = xs.len().min(ys.len());
    if n < 3 {
        return Err(StatsError::TooFewPoints { got: n, min: 3 });
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(StatsError::Degenerate);
    }
    let sxy: f64 = xs[..n].iter().zip(&ys[..n]).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys[..n].iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs[..n].iter().zip(&ys[..n]).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept, slope_stderr: (sse / (nf - 2.0) / sxx).sqrt(), r2 })
}

/// OLS of `ln y` on `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LinearFit, StatsError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(StatsError::TooFewPoints { got: xs.len().min(ys.len()), min: 3 });
    }
    for (index, &value) in xs.iter().chain(ys).enumerate() {
        if !(value > 0.0) {
            return Err(StatsError::NonPositive { index: index % xs.len(), value });
        }
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}

/// Fewest records `percentile_profile` accepts.
pub const MIN_PROFILE_RECORDS: usize = 100;
/// Upper end of the percentile range used for the low-percentile fit.
pub const PROFILE_FIT_MAX: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileProfile {
    /// `(percentile, distance)`, percentile `(i - 1/2) / N` for the `i`-th smallest distance.
    pub series: Vec<(f64, f64)>,
    /// Distance against percentile over percentiles up to 0.25.
    pub fit: LinearFit,
}

pub fn percentile_profile_values(distances: &[f64]) -> Result<PercentileProfile, StatsError> {
    if distances.len() < MIN_PROFILE_RECORDS {
        return Err(StatsError::TooFewPoints { got: distances.len(), min: MIN_PROFILE_RECORDS });
    }
    let d = sorted(distances.iter().copied());
    let nf = d.len() as f64;
    let series: Vec<(f64, f64)> = d.iter().enumerate().map(|(i, &v)| ((i as f64 + 0.5) / nf, v)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = series.iter().filter(|(q, _)| *q <= PROFILE_FIT_MAX).copied().unzip();
    Ok(PercentileProfile { fit: ols(&xs, &ys)?, series })
}

/// Quantile curve of the non-censored distances of the given norm.
pub fn percentile_profile(records: &[AttackRecord], norm: Norm) -> Result<PercentileProfile, StatsError> {
    let d: Vec<f64> = records.iter().filter(|r| r.norm == norm && !r.censored).map(|r| r.distance).collect();
    percentile_profile_values(&d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 1.0), Some(4.0));
        assert_eq!(percentile(&v, 0.5), Some(2.5));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn exact_power_law() {
        let xs = [64.0, 256.0, 1024.0, 4096.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.sqrt()).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-13);
        let flat = fit_loglog(&xs, &[2.0; 4]).unwrap();
        assert!(flat.slope.abs() < 1e-15);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_loglog(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::TooFewPoints { .. })));
        assert!(matches!(fit_loglog(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0]), Err(StatsError::NonPositive { index: 2, .. })));
        assert!(matches!(ols(&[1.0; 3], &[1.0, 2.0, 3.0]), Err(StatsError::Degenerate)));
    }

    #[test]
    fn uniform_profile_is_linear() {
        let a = 2.5;
        let d: Vec<f64> = (0..400).map(|i| a * (i as f64 + 0.5) / 400.0).collect();
        let p = percentile_profile_values(&d).unwrap();
        assert!((p.fit.slope - a).abs() < 1e-12);
        assert!((p.fit.r2 - 1.0).abs() < 1e-12);
        let c = percentile_profile_values(&[1.0; 150]).unwrap();
        assert_eq!(c.fit.slope, 0.0);
        assert!(matches!(percentile_profile_values(&[1.0; 10]), Err(StatsError::TooFewPoints { .. })));
    }
}
