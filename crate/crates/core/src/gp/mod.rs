//! Finite-dimensional Gaussian-process experiments on kernel Gram matrices.

mod crossing;
mod ensemble;
mod rice;
mod tails;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::arch::ArchSpec;
use crate::kernel::{self, KernelError};
use crate::numeric::QuadError;

pub use crossing::{crossing_probability, discretize, quasi_random, CrossingEstimate, Region};
pub use ensemble::{build_ensemble, condition_on_anchor, ConditionedEnsemble, GramEnsemble, JITTER_CAP};
pub use rice::{rice_check, RiceReport};
pub use tails::{
    borell_tis_check, dudley_check, dudley_check_cloud, expected_max_abs_normal, DudleyReport,
    TailReport, TailRow, MIN_TAIL_TRIALS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("gram matrix is not positive semidefinite even with jitter {jitter:e}: eigenvalues in [{min_eig:e}, {max_eig:e}]")]
    NotPsd { min_eig: f64, max_eig: f64, jitter: f64 },
    #[error("anchor {0} has zero variance")]
    ZeroAnchorVariance(usize),
    #[error("anchor index {index} out of range for {len} points")]
    AnchorRange { index: usize, len: usize },
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
    #[error("kernel variance vanishes on the segment at t = {0}")]
    Normalization(f64),
    #[error("{got} trials requested, at least {min} required")]
    TooFewTrials { got: usize, min: usize },
    #[error("point has {got} entries, kernel expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// A covariance function with the smoothness constants `(C, M)` used by the bounds.
pub trait CovarianceKernel: Sync {
    fn input_len(&self) -> usize;

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, GpError>;

    /// `(C, M)`.
    fn smoothness(&self) -> (f64, f64);

    fn matrix(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>, GpError> {
        let m = points.len();
        let mut k = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = self.eval(&points[i], &points[j])?;
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    fn check_point(&self, x: &[f64]) -> Result<(), GpError> {
        if x.len() != self.input_len() {
            return Err(GpError::Dimension { expected: self.input_len(), got: x.len() });
        }
        Ok(())
    }
}

impl CovarianceKernel for ArchSpec {
    fn input_len(&self) -> usize {
        ArchSpec::input_len(self)
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, GpError> {
        Ok(kernel::kernel(self, x, y)?)
    }

    fn smoothness(&self) -> (f64, f64) {
        let s = kernel::smoothness_constants(self);
        (s.c, s.m)
    }

    fn matrix(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>, GpError> {
        Ok(kernel::kernel_matrix(self, points)?)
    }
}

/// `K(x, y) = x . y`, the covariance of `w . x` with standard normal `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearKernel {
    pub n: usize,
}

impl CovarianceKernel for LinearKernel {
    fn input_len(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, GpError> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(x.iter().zip(y).map(|(a, b)| a * b).sum())
    }

    fn smoothness(&self) -> (f64, f64) {
        (1.0, 1.0)
    }
}
