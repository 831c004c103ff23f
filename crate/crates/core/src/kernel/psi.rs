use std::f64::consts::PI;

use super::KernelError;

/// Largest excursion outside `[-1, 1]` that is treated as rounding and clamped.
pub const CORRELATION_TOL: f64 = 1e-12;

/// ReLU arccosine component `(sqrt(1 - t^2) + (pi - arccos t) t) / pi`.
///
/// Writing `t = cos(theta)`, negative arguments are evaluated through
/// `u = pi - theta` as `(sin u - u cos u) / pi`, which cancels as `u^3 / 3`
/// near `t = -1`; a series is used there to keep full relative precision.
pub fn psi(t: f64) -> Result<f64, KernelError> {
    if !(t.abs() <= 1.0 + CORRELATION_TOL) {
        return Err(KernelError::PsiDomain(t));
    }
    Ok(psi_clamped(t.clamp(-1.0, 1.0)))
}

pub(crate) fn psi_clamped(t: f64) -> f64 {
    let sin = ((1.0 - t) * (1.0 + t)).sqrt();
    if t >= 0.0 {
        return (sin + (PI - t.acos()) * t) / PI;
    }
    let u = (-t).acos();
    if u < 0.5 {
        sin_minus_u_cos(u) / PI
    } else {
        (sin + u * t) / PI
    }
}

/// `sin u - u cos u = sum_{k>=1} (-1)^(k+1) 2k u^(2k+1) / (2k+1)!`.
fn sin_minus_u_cos(u: f64) -> f64 {
    let u2 = u * u;
    let mut power = u * u2; // u^(2k+1)
    let mut fact = 6.0; // (2k+1)!
    let mut sum = 0.0;
    for k in 1..=12 {
        let k = k as f64;
        let term = 2.0 * k * power / fact;
        if (k as i64) % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
        power *= u2;
        fact *= (2.0 * k + 2.0) * (2.0 * k + 3.0);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_center() {
        assert_eq!(psi(1.0).unwrap(), 1.0);
        assert_eq!(psi(-1.0).unwrap(), 0.0);
        assert!((psi(0.0).unwrap() - 1.0 / PI).abs() < 1e-16);
    }

    #[test]
    fn tolerance_clamps_and_rejects() {
        assert_eq!(psi(1.0 + 1e-13).unwrap(), 1.0);
        assert!(matches!(psi(1.0 + 1e-9), Err(KernelError::PsiDomain(_))));
        assert!(psi(f64::NAN).is_err());
    }

    #[test]
    fn series_branch_is_continuous() {
        let t = -(0.5f64).cos();
        let a = psi_clamped(t - 1e-12);
        let b = psi_clamped(t + 1e-12);
        assert!((a - b).abs() < 1e-10);
        let direct = (((1.0 - t * t).sqrt()) + (PI - t.acos()) * t) / PI;
        assert!((a - direct).abs() < 1e-12);
    }

    #[test]
    fn bounds_on_dense_grid() {
        let n = 10_000;
        for i in 0..=n {
            let t = -1.0 + 2.0 * i as f64 / n as f64;
            let v = psi(t).unwrap();
            assert!((0.0..=1.0).contains(&v), "psi({t}) = {v}");
            assert!(v >= t - 1e-15, "psi({t}) = {v} < t");
        }
    }
}
