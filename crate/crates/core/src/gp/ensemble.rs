use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{CovarianceKernel, GpError};
use crate::rng;

/// Largest jitter, relative to the largest diagonal entry.
pub const JITTER_CAP: f64 = 1e-6;
/// Pivots below this multiple of the largest diagonal entry count as breakdown.
const PIVOT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct GramEnsemble {
    pub points: Vec<Vec<f64>>,
    pub gram: DMatrix<f64>,
    /// Lower triangular `L` with `L L^T = gram + jitter_used * I`.
    pub factor: DMatrix<f64>,
    pub jitter_used: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedEnsemble {
    pub anchor: usize,
    pub phi0: f64,
    pub mean: Vec<f64>,
    pub gram: DMatrix<f64>,
}

pub fn build_ensemble<K: CovarianceKernel + ?Sized>(
    kernel: &K,
    points: Vec<Vec<f64>>,
) -> Result<GramEnsemble, GpError> {
    for p in &points {
        kernel.check_point(p)?;
    }
    let gram = kernel.matrix(&points)?;
    GramEnsemble::from_gram(points, gram)
}

impl GramEnsemble {
    /// Factor `gram`, escalating the jitter from 0 through `1e-12 .. 1e-6` times
    /// the largest diagonal entry.
    pub fn from_gram(points: Vec<Vec<f64>>, gram: DMatrix<f64>) -> Result<Self, GpError> {
        let scale = gram.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
        if scale == 0.0 {
            let m = gram.nrows();
            return Ok(Self { points, gram, factor: DMatrix::zeros(m, m), jitter_used: 0.0 });
        }
        let mut attempts = vec![0.0];
        attempts.extend((6..=12).rev().map(|e| 10f64.powi(-e) * scale));
        for jitter in attempts {
            if let Some(factor) = cholesky(&gram, jitter, PIVOT_FLOOR * scale) {
                if jitter > 0.0 {
                    log::debug!("gram factorized with jitter {jitter:e}");
                }
                return Ok(Self { points, gram, factor, jitter_used: jitter });
            }
        }
        let eig = gram.clone().symmetric_eigenvalues();
        Err(GpError::NotPsd {
            min_eig: eig.min(),
            max_eig: eig.max(),
            jitter: JITTER_CAP * scale,
        })
    }

    pub fn len(&self) -> usize {
        self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One draw `L z` written into `out`, using stream `trial` of `seed`.
    pub fn draw_into(&self, seed: u64, trial: u64, z: &mut [f64], out: &mut [f64]) {
        let mut rng = rng::stream(seed, trial);
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let m = self.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        // Column-major storage: accumulate column by column over the lower triangle.
        for (j, &zj) in z.iter().enumerate().take(m) {
            let col = self.factor.column(j);
            for i in j..m {
                out[i] += col[i] * zj;
            }
        }
    }

    /// Apply `f` to every draw; the result is ordered by trial and independent of threading.
    pub fn map_draws<T, F>(&self, trials: usize, seed: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        let m = self.len();
        (0..trials)
            .into_par_iter()
            .map_init(
                || (vec![0.0; m], vec![0.0; m]),
                |(z, out), t| {
                    self.draw_into(seed, t as u64, z, out);
                    f(out)
                },
            )
            .collect()
    }

    /// `trials x points` matrix of independent draws.
    pub fn sample(&self, trials: usize, seed: u64) -> DMatrix<f64> {
        let rows = self.map_draws(trials, seed, |v| v.to_vec());
        DMatrix::from_fn(trials, self.len(), |t, i| rows[t][i])
    }
}

/// Cholesky of `a + jitter I`; `None` on a pivot at or below `floor`.
fn cholesky(a: &DMatrix<f64>, jitter: f64, floor: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return None;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Some(l)
}

/// Condition the ensemble on `phi(points[anchor]) = phi0`.
pub fn condition_on_anchor(
    ens: &GramEnsemble,
    anchor: usize,
    phi0: f64,
) -> Result<ConditionedEnsemble, GpError> {
    let m = ens.len();
    if anchor >= m {
        return Err(GpError::AnchorRange { index: anchor, len: m });
    }
    let k00 = ens.gram[(anchor, anchor)];
    if !(k00 > 0.0) {
        return Err(GpError::ZeroAnchorVariance(anchor));
    }
    let col: Vec<f64> = (0..m).map(|i| ens.gram[(i, anchor)]).collect();
    let mut mean: Vec<f64> = col.iter().map(|k| k * phi0 / k00).collect();
    mean[anchor] = phi0;
    let mut gram = DMatrix::from_fn(m, m, |i, j| ens.gram[(i, j)] - col[i] * col[j] / k00);
    for i in 0..m {
        gram[(anchor, i)] = 0.0;
        gram[(i, anchor)] = 0.0;
    }
    Ok(ConditionedEnsemble { anchor, phi0, mean, gram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::LinearKernel;

    fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn orthonormal_points_give_identity() {
        let pts = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let e = build_ensemble(&LinearKernel { n: 3 }, pts).unwrap();
        assert_eq!(e.gram, DMatrix::identity(3, 3));
        assert_eq!(e.jitter_used, 0.0);
        assert_eq!(e.factor, DMatrix::identity(3, 3));
    }

    #[test]
    fn duplicated_point_needs_jitter() {
        let pts = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![0.5, -1.0]];
        let e = build_ensemble(&LinearKernel { n: 2 }, pts).unwrap();
        assert!(e.jitter_used > 0.0);
        assert!(e.jitter_used <= JITTER_CAP * 5.0);
        let shifted = &e.gram + DMatrix::identity(3, 3) * e.jitter_used;
        assert!(rel_frobenius(&(&e.factor * e.factor.transpose()), &shifted) < 1e-8);
    }

    #[test]
    fn indefinite_gram_is_rejected_with_diagnostics() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match GramEnsemble::from_gram(vec![vec![0.0]; 2], g) {
            Err(GpError::NotPsd { min_eig, max_eig, .. }) => {
                assert!((min_eig + 1.0).abs() < 1e-12);
                assert!((max_eig - 3.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_gram_samples_zero() {
        let e = GramEnsemble::from_gram(vec![vec![0.0]; 3], DMatrix::zeros(3, 3)).unwrap();
        assert!(e.sample(10, 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_is_reproducible_and_scaled() {
        let e = GramEnsemble::from_gram(vec![vec![0.0]], DMatrix::from_element(1, 1, 4.0)).unwrap();
        let a = e.sample(20_000, 9);
        assert_eq!(a, e.sample(20_000, 9));
        let var = a.iter().map(|v| v * v).sum::<f64>() / 20_000.0;
        // stderr of the variance estimate is 4 sqrt(2 / 20000) ~ 0.04
        assert!((var - 4.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn conditioning_at_anchor() {
        let pts = vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 2.0]];
        let e = build_ensemble(&LinearKernel { n: 2 }, pts).unwrap();
        let c = condition_on_anchor(&e, 0, 1.5).unwrap();
        assert_eq!(c.mean[0], 1.5);
        assert_eq!(c.gram[(0, 0)], 0.0);
        // Linear kernel with anchor e1: the e2 component keeps its variance.
        assert!((c.gram[(2, 2)] - 4.0).abs() < 1e-15);
        assert!((c.gram[(1, 1)] - 0.64).abs() < 1e-15);
        assert!((c.mean[1] - 0.9).abs() < 1e-15);
        for i in 0..3 {
            assert!(c.gram[(i, i)] <= e.gram[(i, i)]);
        }
        assert!(matches!(condition_on_anchor(&e, 5, 0.0), Err(GpError::AnchorRange { .. })));
        let z = GramEnsemble::from_gram(vec![vec![0.0]; 1], DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(condition_on_anchor(&z, 0, 0.0), Err(GpError::ZeroAnchorVariance(0)));
    }
}
