//! Covering numbers of the unit l1 ball by Euclidean balls, the lattice
//! construction behind the middle regime, and the entropy integral.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::numeric::{adaptive_simpson, QuadError};
use crate::rng;

/// Largest lattice that `lattice_cover` will enumerate.
pub const LATTICE_BUDGET: u128 = 5_000_000;
/// Largest dimension accepted by `lattice_cover`.
pub const LATTICE_MAX_DIM: usize = 12;
/// Samples per RNG stream in `verify_cover`.
const CHUNK: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("lattice needs 2 <= m <= n <= {LATTICE_MAX_DIM}, got n = {n}, m = {m}")]
    Range { n: usize, m: usize },
    #[error("lattice has {count} points, above the enumeration budget {LATTICE_BUDGET}")]
    Budget { count: u128 },
    #[error("sample {point:?} is at squared distance {dist2} from the lattice, above {bound}")]
    Counterexample { point: Vec<f64>, dist2: f64, bound: f64 },
    #[error("dimension n = {0} must be at least 2")]
    Dimension(usize),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Upper bound on the number of Euclidean `eps`-balls covering the unit l1 ball in `R^n`.
pub fn covering_bound(n: usize, eps: f64) -> f64 {
    let nf = n as f64;
    if eps >= 1.0 {
        1.0
    } else if !(eps > 0.0) {
        f64::INFINITY
    } else if eps * eps * nf > 1.0 {
        (2.0 * nf).powf(1.0 / (eps * eps))
    } else {
        (1.0 + 2.0 / eps).powf(nf)
    }
}

/// `ln covering_bound(n, eps)`, finite where the bound itself overflows.
pub fn ln_covering_bound(n: usize, eps: f64) -> f64 {
    let nf = n as f64;
    if eps >= 1.0 {
        0.0
    } else if !(eps > 0.0) {
        f64::INFINITY
    } else if eps * eps * nf > 1.0 {
        (2.0 * nf).ln() / (eps * eps)
    } else {
        nf * (2.0 / eps).ln_1p()
    }
}

/// `sum_{k < m} 2^k C(n, k) C(m - 1, k)`, the number of points of `Z^n / m` in the open l1 ball.
pub fn lattice_cardinality(n: usize, m: usize) -> u128 {
    (0..m.min(n + 1)).map(|k| (1u128 << k) * binomial(n, k) * binomial(m - 1, k)).sum()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeCover {
    pub n: usize,
    pub m: usize,
    /// Integer numerators `z` of the centers `z / m`, with `sum |z_i| <= m - 1`.
    numerators: Vec<Vec<i32>>,
    /// `sqrt(1 / m)`.
    pub radius_bound: f64,
}

impl LatticeCover {
    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn numerators(&self) -> &[Vec<i32>] {
        &self.numerators
    }

    pub fn centers(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let m = self.m as f64;
        self.numerators.iter().map(move |z| z.iter().map(|&v| f64::from(v) / m).collect())
    }

    /// Squared Euclidean distance from `x` to the nearest center.
    pub fn nearest_dist2(&self, x: &[f64]) -> f64 {
        let m = self.m as f64;
        // Componentwise rounding is the nearest point of the full lattice; it
        // is the answer whenever it lies in the ball.
        let rounded: Vec<f64> = x.iter().map(|v| (v * m).round()).collect();
        if rounded.iter().map(|v| v.abs()).sum::<f64>() <= (self.m - 1) as f64 {
            return x.iter().zip(&rounded).map(|(v, z)| (v - z / m).powi(2)).sum();
        }
        self.numerators
            .iter()
            .map(|z| x.iter().zip(z).map(|(v, &c)| (v - f64::from(c) / m).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Enumerate `Z^n / m` inside the open unit l1 ball.
pub fn lattice_cover(n: usize, m: usize) -> Result<LatticeCover, CoverError> {
    if m < 2 || m > n || n > LATTICE_MAX_DIM {
        return Err(CoverError::Range { n, m });
    }
    let count = lattice_cardinality(n, m);
    if count > LATTICE_BUDGET {
        return Err(CoverError::Budget { count });
    }
    let mut numerators = Vec::with_capacity(count as usize);
    let mut current = vec![0i32; n];
    enumerate(&mut current, 0, (m - 1) as i32, &mut numerators);
    Ok(LatticeCover { n, m, numerators, radius_bound: (1.0 / m as f64).sqrt() })
}

fn enumerate(current: &mut [i32], i: usize, left: i32, out: &mut Vec<Vec<i32>>) {
    if i == current.len() {
        out.push(current.to_vec());
        return;
    }
    for v in -left..=left {
        current[i] = v;
        enumerate(current, i + 1, left - v.abs(), out);
    }
    current[i] = 0;
}

/// Uniform point in the open unit l1 ball: normalized exponentials with random signs.
pub fn sample_l1_ball<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    e[..n]
        .iter()
        .map(|v| if rng.random::<bool>() { v / total } else { -v / total })
        .collect()
}

/// Check `samples` uniform points of the l1 ball against the radius `sqrt(1/m)`;
/// returns the largest nearest-center squared distance observed.
pub fn verify_cover(cover: &LatticeCover, samples: usize, seed: u64) -> Result<f64, CoverError> {
    let bound = 1.0 / cover.m as f64;
    let chunks = samples.div_ceil(CHUNK);
    let maxima = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, c as u64);
            let mut worst = 0.0f64;
            for _ in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let x = sample_l1_ball(&mut rng, cover.n);
                let d2 = cover.nearest_dist2(&x);
                if d2 > bound {
                    return Err(CoverError::Counterexample { point: x, dist2: d2, bound });
                }
                worst = worst.max(d2);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(maxima.into_iter().fold(0.0, f64::max))
}

/// Lower end of the direct quadrature; below it the substitution `eps = a e^(-u)` is used.
const EPS_FLOOR: f64 = 1e-6;
const QUAD_TOL: f64 = 1e-8;

/// `int_0^1 sqrt(ln covering_bound(n, eps)) d eps` by adaptive quadrature.
pub fn dudley_integral(n: usize) -> Result<f64, CoverError> {
    if n < 2 {
        return Err(CoverError::Dimension(n));
    }
    let split = 1.0 / (n as f64).sqrt();
    // The integrand jumps at 1/sqrt(n), so each regime is integrated on its own.
    let small = |eps: f64| ((n as f64) * (2.0 / eps).ln_1p()).sqrt();
    // Middle regime on the open interval (1/sqrt(n), 1); the value at eps = 1 is the left limit.
    let mid = |eps: f64| (2.0 * n as f64).ln().sqrt() / eps;
    let head = adaptive_simpson(
        |u: f64| EPS_FLOOR * (-u).exp() * small(EPS_FLOOR * (-u).exp()),
        0.0,
        60.0,
        QUAD_TOL,
    )?;
    let low = adaptive_simpson(small, EPS_FLOOR, split, QUAD_TOL)?;
    let high = adaptive_simpson(mid, split, 1.0, QUAD_TOL)?;
    Ok(head + low + high)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes() {
        assert_eq!(covering_bound(7, 1.0), 1.0);
        assert_eq!(covering_bound(7, 3.0), 1.0);
        assert!((covering_bound(4, 0.75) - 8f64.powf(16.0 / 9.0)).abs() < 1e-12);
        assert!((covering_bound(2, 0.5) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_lattice() {
        let c = lattice_cover(2, 2).unwrap();
        let mut pts: Vec<Vec<i32>> = c.numerators().to_vec();
        pts.sort();
        assert_eq!(pts, vec![vec![-1, 0], vec![0, -1], vec![0, 0], vec![0, 1], vec![1, 0]]);
        for center in c.centers() {
            assert!(center.iter().map(|v| v.abs()).sum::<f64>() < 1.0);
        }
    }

    #[test]
    fn range_and_budget() {
        assert!(matches!(lattice_cover(3, 4), Err(CoverError::Range { .. })));
        assert!(matches!(lattice_cover(3, 1), Err(CoverError::Range { .. })));
        assert!(matches!(lattice_cover(12, 12), Err(CoverError::Budget { .. })));
    }

    #[test]
    fn nearest_fast_path_agrees_with_brute_force() {
        let c = lattice_cover(5, 3).unwrap();
        let mut rng = rng::stream(1, 0);
        for _ in 0..2000 {
            let x = sample_l1_ball(&mut rng, 5);
            let brute = c
                .centers()
                .map(|y| x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((c.nearest_dist2(&x) - brute).abs() < 1e-15);
        }
    }

    #[test]
    fn center_is_at_distance_zero() {
        let c = lattice_cover(3, 3).unwrap();
        assert_eq!(c.nearest_dist2(&[0.0, 1.0 / 3.0, -1.0 / 3.0]), 0.0);
    }

    #[test]
    fn dudley_integral_is_deterministic() {
        let a = dudley_integral(2).unwrap();
        let b = dudley_integral(2).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }
}
