//! Closed-form robustness radii and their inverse probability bounds.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertError {
    #[error("dimension n = {0} must be at least 2")]
    Dimension(usize),
    #[error("delta = {0} must lie in (0, 1)")]
    Delta(f64),
    #[error("M = {0} must be positive and finite")]
    Ratio(f64),
    #[error("|x0|_2 = {0} must be nonnegative and finite")]
    Norm(f64),
    #[error("p = {0} must be at least 1")]
    Exponent(f64),
}

/// Which ball-radius denominator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BallForm {
    /// `12 sqrt(ln 4n) + 8 ln n sqrt(ln 2n) + 2 sqrt(pi)`, the published constant.
    #[default]
    Stated,
    /// `sqrt(pi) (16 a_n / sqrt(pi) + 1 + delta)`: solving the ball failure bound
    /// for equality. Dividing the stated denominator by `sqrt(pi)` gives
    /// `16 a_n / sqrt(pi) + 2 >= 16 a_n / sqrt(pi) + 1 + delta`, so this radius
    /// is never smaller.
    Tight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Ball,
    Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessCertificate {
    pub n: usize,
    pub delta: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub norm2_x0: f64,
    pub a_n: f64,
    pub r_l1: f64,
    pub r_segment: f64,
    pub ball_form: BallForm,
}

impl RobustnessCertificate {
    /// Certified `l^p` radius `r_l1 / n^((p-1)/p)`; `p = inf` gives `r_l1 / n`.
    pub fn r_lp(&self, p: f64) -> Result<f64, CertError> {
        if !(p >= 1.0) {
            return Err(CertError::Exponent(p));
        }
        let n = self.n as f64;
        Ok(if p.is_infinite() { self.r_l1 / n } else { self.r_l1 / n.powf((p - 1.0) / p) })
    }
}

/// `a_n = (3/4) sqrt(ln 4n) + (ln n / 2) sqrt(ln 2n)`.
pub fn dudley_constant(n: usize) -> Result<f64, CertError> {
    if n < 2 {
        return Err(CertError::Dimension(n));
    }
    Ok(dudley_formula(n as f64))
}

/// The closed form of `a_n` without the range check (finite for `n >= 1`).
pub(crate) fn dudley_formula(n: f64) -> f64 {
    0.75 * (4.0 * n).ln().sqrt() + 0.5 * n.ln() * (2.0 * n).ln().sqrt()
}

pub fn certify(norm2_x0: f64, delta: f64, m: f64, n: usize) -> Result<RobustnessCertificate, CertError> {
    certify_with(norm2_x0, delta, m, n, BallForm::Stated)
}

pub fn certify_with(
    norm2_x0: f64,
    delta: f64,
    m: f64,
    n: usize,
    form: BallForm,
) -> Result<RobustnessCertificate, CertError> {
    let a_n = dudley_constant(n)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CertError::Delta(delta));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(CertError::Ratio(m));
    }
    if !(norm2_x0 >= 0.0 && norm2_x0.is_finite()) {
        return Err(CertError::Norm(norm2_x0));
    }
    if norm2_x0 == 0.0 {
        log::warn!("|x0|_2 = 0: every certified radius degenerates to 0");
    }
    let nf = n as f64;
    let sqrt_pi = PI.sqrt();
    let r_l1 = match form {
        BallForm::Stated => {
            let denom = 12.0 * (4.0 * nf).ln().sqrt()
                + 8.0 * nf.ln() * (2.0 * nf).ln().sqrt()
                + 2.0 * sqrt_pi;
            norm2_x0 * delta * sqrt_pi / (m * denom)
        }
        BallForm::Tight => norm2_x0 * delta / (m * (16.0 * a_n / sqrt_pi + 1.0 + delta)),
    };
    let r_segment = PI * norm2_x0 * delta / (2.0 * m + PI);
    Ok(RobustnessCertificate { n, delta, m, norm2_x0, a_n, r_l1, r_segment, ball_form: form })
}

/// Upper bound on the probability that the decision boundary meets the region
/// of size `r` around `x0`; saturates at 1 where the bound is vacuous.
pub fn failure_prob(r: f64, norm2_x0: f64, m: f64, n: usize, region: Region) -> f64 {
    if !(r > 0.0) {
        return if r == 0.0 { 0.0 } else { 1.0 };
    }
    match region {
        Region::Ball => {
            let Ok(a_n) = dudley_constant(n) else { return 1.0 };
            let ratio = norm2_x0 / (m * r);
            if !(ratio > 1.0) {
                return 1.0;
            }
            ((16.0 / PI.sqrt() * a_n + 1.0) / (ratio - 1.0)).min(1.0)
        }
        Region::Segment => {
            if !(r < norm2_x0) {
                return 1.0;
            }
            (2.0 * m * r / (PI * (norm2_x0 - r))).min(1.0)
        }
    }
}
