use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::GramEnsemble;
use super::GpError;
use crate::certificate::dudley_formula;
use crate::covering::sample_l1_ball;
use crate::numeric::{adaptive_simpson, binomial_stderr, normal_cdf};
use crate::rng;

/// Fewest trials for which the empirical mean supremum is trusted as a stand-in
/// for the true expectation.
pub const MIN_TAIL_TRIALS: usize = 10_000;
/// Draws per RNG chunk in the Dudley check.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub t: f64,
    pub frequency: f64,
    pub stderr: f64,
    /// `exp(-t^2 / (2 sigma^2))`.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    /// Square root of the largest variance in the ensemble.
    pub sigma: f64,
    pub mean_sup: f64,
    pub mean_sup_stderr: f64,
    pub trials: usize,
    pub rows: Vec<TailRow>,
}

/// Empirical `P(sup >= E sup + t)` against the Gaussian concentration bound,
/// with the empirical mean supremum standing in for `E sup`.
pub fn borell_tis_check(
    ens: &GramEnsemble,
    t_values: &[f64],
    trials: usize,
    seed: u64,
) -> Result<TailReport, GpError> {
    if trials < MIN_TAIL_TRIALS {
        return Err(GpError::TooFewTrials { got: trials, min: MIN_TAIL_TRIALS });
    }
    let sups = ens.map_draws(trials, seed, |v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let nt = trials as f64;
    let mean_sup = sups.iter().sum::<f64>() / nt;
    let var = sups.iter().map(|s| (s - mean_sup).powi(2)).sum::<f64>() / (nt - 1.0);
    let sigma = ens.gram.diagonal().iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
    let rows = t_values
        .iter()
        .map(|&t| {
            let hits = sups.iter().filter(|&&s| s >= mean_sup + t).count();
            let frequency = hits as f64 / nt;
            let stderr = binomial_stderr(frequency, trials);
            let bound = if t <= 0.0 { 1.0 } else { (-t * t / (2.0 * sigma * sigma)).exp() };
            TailRow { t, frequency, stderr, bound, pass: frequency <= bound + 3.0 * stderr }
        })
        .collect();
    Ok(TailReport { sigma, mean_sup, mean_sup_stderr: (var / nt).sqrt(), trials, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DudleyReport {
    pub n: usize,
    pub cloud_size: usize,
    pub trials: usize,
    /// Mean over draws of `max_x w . x` on the cloud.
    pub empirical_sup: f64,
    pub stderr: f64,
    /// `E |w|_inf`, the supremum over the whole l1 ball.
    pub analytic_linf: f64,
    /// `8 sqrt(2) a_n`.
    pub bound: f64,
    pub pass: bool,
}

/// Expected supremum of the linear process `w . x` over a cloud in the unit l1
/// ball: the 2n points `+-(1 - 1e-9) e_i` (as many as fit) and uniform samples.
pub fn dudley_check(n: usize, cloud_size: usize, trials: usize, seed: u64) -> Result<DudleyReport, GpError> {
    let vertices = (2 * n).min(cloud_size);
    let mut cloud: Vec<Vec<f64>> = (0..vertices)
        .map(|v| {
            let mut e = vec![0.0; n];
            e[v / 2] = if v % 2 == 0 { 1.0 - 1e-9 } else { -(1.0 - 1e-9) };
            e
        })
        .collect();
    let mut rng = rng::stream(rng::subseed(seed, "dudley-cloud"), 0);
    while cloud.len() < cloud_size {
        cloud.push(sample_l1_ball(&mut rng, n));
    }
    dudley_check_cloud(&cloud, trials, seed)
}

pub fn dudley_check_cloud(cloud: &[Vec<f64>], trials: usize, seed: u64) -> Result<DudleyReport, GpError> {
    let n = cloud.first().map_or(0, Vec::len);
    if n == 0 || trials == 0 {
        return Err(GpError::DegenerateRegion("empty cloud or no trials".into()));
    }
    if let Some(bad) = cloud.iter().find(|p| p.len() != n) {
        return Err(GpError::Dimension { expected: n, got: bad.len() });
    }
    let x = DMatrix::from_fn(cloud.len(), n, |i, j| cloud[i][j]);
    let chunks = trials.div_ceil(CHUNK);
    let sups: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(trials);
            let mut w = DMatrix::<f64>::zeros(n, hi - lo);
            for t in lo..hi {
                let mut rng = rng::stream(seed, t as u64);
                for j in 0..n {
                    w[(j, t - lo)] = StandardNormal.sample(&mut rng);
                }
            }
            let values = &x * w;
            (0..hi - lo)
                .map(|k| values.column(k).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect::<Vec<_>>()
        })
        .collect();
    let nt = trials as f64;
    let mean = sups.iter().sum::<f64>() / nt;
    let var = sups.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (nt - 1.0).max(1.0);
    let bound = 8.0 * std::f64::consts::SQRT_2 * dudley_formula(n as f64);
    Ok(DudleyReport {
        n,
        cloud_size: cloud.len(),
        trials,
        empirical_sup: mean,
        stderr: (var / nt).sqrt(),
        analytic_linf: expected_max_abs_normal(n)?,
        bound,
        pass: mean <= bound,
    })
}

/// `E max_i |Z_i|` for `n` independent standard normals, `int_0^inf 1 - (2 Phi(x) - 1)^n dx`.
pub fn expected_max_abs_normal(n: usize) -> Result<f64, GpError> {
    let f = |x: f64| {
        let p = 2.0 * normal_cdf(x) - 1.0;
        -(n as f64 * p.ln()).exp_m1()
    };
    // Beyond 12 the integrand is below n * 1e-32.
    Ok(adaptive_simpson(f, 0.0, 12.0, 1e-10)?)
}
