use std::cell::RefCell;
use std::f64::consts::PI;

use serde::Serialize;

use super::crossing::{discretize, Region};
use super::ensemble::build_ensemble;
use super::{CovarianceKernel, GpError};
use crate::numeric::composite_simpson;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiceReport {
    /// Mean number of sign changes between consecutive grid points.
    pub empirical_mean: f64,
    pub stderr: f64,
    /// `(1/pi) int_0^r sqrt(d_s d_t Kn(s,t)|_{s=t}) dt` for the normalized kernel `Kn`.
    pub rice_bound: f64,
    /// `2 M r / (pi (|x0|_2 - r))`.
    pub coarse_bound: f64,
    pub trials: usize,
    pub grid_size: usize,
}

/// Expected zero count along the segment `x0 + t v / |v|`, `0 <= t <= r`:
/// empirical, from Rice's formula, and from the smoothness bound.
pub fn rice_check<K: CovarianceKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    v: &[f64],
    r: f64,
    grid_size: usize,
    trials: usize,
    seed: u64,
) -> Result<RiceReport, GpError> {
    kernel.check_point(x0)?;
    let region = Region::Segment { v: v.to_vec(), r };
    let pts = discretize(x0, &region, grid_size)?;
    let norm_v = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let at = |t: f64| -> Vec<f64> { x0.iter().zip(v).map(|(a, b)| a + t * b / norm_v).collect() };

    let normalized = |s: f64, t: f64| -> Result<f64, GpError> {
        let (xs, xt) = (at(s), at(t));
        let kss = kernel.eval(&xs, &xs)?;
        let ktt = kernel.eval(&xt, &xt)?;
        if !(kss > 0.0) {
            return Err(GpError::Normalization(s));
        }
        if !(ktt > 0.0) {
            return Err(GpError::Normalization(t));
        }
        Ok(kernel.eval(&xs, &xt)? / (kss * ktt).sqrt())
    };
    let h = r / (8.0 * grid_size as f64);
    // 1 - Kn(t - h, t + h) = 2 lambda h^2 + O(h^4); one Richardson step removes the h^2 term.
    let mixed = |t: f64| -> Result<f64, GpError> {
        let coarse = (1.0 - normalized(t - h, t + h)?) / (2.0 * h * h);
        let half = 0.5 * h;
        let fine = (1.0 - normalized(t - half, t + half)?) / (2.0 * half * half);
        Ok(((4.0 * fine - coarse) / 3.0).max(0.0))
    };
    let ens = build_ensemble(kernel, pts)?;
    if let Some(k) = (0..grid_size).find(|&k| !(ens.gram[(k, k)] > 0.0)) {
        return Err(GpError::Normalization(r * k as f64 / (grid_size - 1) as f64));
    }
    let failure = RefCell::new(None);
    let integrand = |t: f64| match mixed(t) {
        Ok(l) => l.sqrt(),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    // The integrand carries finite-difference noise of relative size 1e-16 / h^2,
    // which defeats error estimates of adaptive rules; a fixed Simpson rule on a
    // mesh at least as fine as the sampling grid is used instead.
    let integral = composite_simpson(integrand, r, 2 * grid_size.max(32));
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let (_, m) = kernel.smoothness();
    let x0_norm = norm2(x0);
    let coarse_bound = if r < x0_norm { 2.0 * m * r / (PI * (x0_norm - r)) } else { f64::INFINITY };
    let rice_bound = integral / PI;

    let counts = ens.map_draws(trials, seed, |vals| {
        vals.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count() as f64
    });
    let nt = trials.max(1) as f64;
    let mean = counts.iter().sum::<f64>() / nt;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (nt - 1.0).max(1.0);
    Ok(RiceReport {
        empirical_mean: mean,
        stderr: (var / nt).sqrt(),
        rice_bound,
        coarse_bound,
        trials,
        grid_size,
    })
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::LinearKernel;

    #[test]
    fn linear_kernel_orthogonal_segment() {
        let k = LinearKernel { n: 2 };
        let rep = rice_check(&k, &[10.0, 0.0], &[0.0, 1.0], 1.0, 64, 4000, 5).unwrap();
        let exact = (0.1f64).atan() / PI;
        assert!((rep.rice_bound - exact).abs() < 1e-7, "{} vs {exact}", rep.rice_bound);
        assert!(rep.rice_bound <= rep.coarse_bound);
        assert!((rep.empirical_mean - exact).abs() < 4.0 * rep.stderr + 1e-3);
    }

    #[test]
    fn short_segment_vanishes() {
        let k = LinearKernel { n: 2 };
        let rep = rice_check(&k, &[10.0, 0.0], &[0.0, 1.0], 1e-3, 16, 100, 5).unwrap();
        assert!(rep.rice_bound < 1e-4 && rep.coarse_bound < 1e-4 && rep.empirical_mean == 0.0);
    }

    #[test]
    fn zero_variance_is_reported() {
        let k = LinearKernel { n: 2 };
        assert!(matches!(
            rice_check(&k, &[0.0, 0.0], &[0.0, 1.0], 1.0, 8, 10, 1),
            Err(GpError::Normalization(_))
        ));
    }
}
