//! Quadrature and small numeric helpers shared by the validation modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("adaptive quadrature on [{a}, {b}] did not converge to {tol}")]
    NoConvergence { a: f64, b: f64, tol: f64 },
    #[error("integrand is not finite at {0}")]
    NonFinite(f64),
}

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadError::NonFinite(x))
        }
    };
    let fa = eval(a)?;
    let fb = eval(b)?;
    let m = 0.5 * (a + b);
    let fm = eval(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut budget = 2_000_000usize;
    recurse(&eval, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut budget)
        .ok_or(QuadError::NoConvergence { a, b, tol })?
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> Result<f64, QuadError>>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
) -> Option<Result<f64, QuadError>> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = match f(lm) {
        Ok(v) => v,
        Err(e) => return Some(Err(e)),
    };
    let frm = match f(rm) {
        Ok(v) => v,
        Err(e) => return Some(Err(e)),
    };
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(Ok(left + right + delta / 15.0));
    }
    if depth == 0 || *budget == 0 {
        return None;
    }
    *budget -= 1;
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget)?;
    Some(match (l, r) {
        (Ok(l), Ok(r)) => Ok(l + r),
        (Err(e), _) | (_, Err(e)) => Err(e),
    })
}

/// Simpson's rule on `[0, b]` with `intervals` (rounded up to even) equal cells.
pub fn composite_simpson<F: FnMut(f64) -> f64>(mut f: F, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2).next_multiple_of(2);
    let h = b / n as f64;
    let mut sum = f(0.0) + f(b);
    for k in 1..n {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    sum * h / 3.0
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Binomial standard error of a frequency estimated from `trials` draws.
pub fn binomial_stderr(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_sqrt() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(f64::sqrt, 0.0, 1.0, 1e-10).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn composite_simpson_is_exact_on_cubics() {
        let v = composite_simpson(|x| x * x * x - x, 2.0, 3);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nonfinite_integrand_is_reported() {
        assert!(matches!(adaptive_simpson(|x| 1.0 / x, 0.0, 1.0, 1e-8), Err(QuadError::NonFinite(_))));
    }

    #[test]
    fn normal_helpers_round_trip() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        for p in [1e-6, 0.1, 0.5, 0.975] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-9 * p);
        }
    }
}
