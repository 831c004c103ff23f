//! Infinite-width covariance of ReLU networks and the smoothness constants
//! derived from the layer recursion.

mod field;
pub(crate) mod psi;
mod smoothness;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::arch::ArchSpec;

pub use field::{layer_fields, propagate_layer, KernelField};
pub use psi::{psi, CORRELATION_TOL};
pub use smoothness::{smoothness_constants, SmoothnessConstants};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("psi argument {0} outside [-1, 1]")]
    PsiDomain(f64),
    #[error("input has {got} entries, architecture expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("field shape mismatch: {0}")]
    Shape(String),
    #[error("negative diagonal entry {value} at pixel {pixel}")]
    NegativeDiagonal { pixel: usize, value: f64 },
    #[error("correlation {value} at ({row}, {col}) outside [-1, 1]")]
    Correlation { value: f64, row: usize, col: usize },
    #[error("negative squared RKHS distance {0}")]
    NegativeDistance(f64),
}

/// Relative tolerance on the squared RKHS distance below zero.
pub const DISTANCE_TOL: f64 = 1e-10;

/// Scalar output kernel `(K(x,x), K(x,y), K(y,y))`.
pub fn kernel_triple(arch: &ArchSpec, x: &[f64], y: &[f64]) -> Result<(f64, f64, f64), KernelError> {
    let fields = layer_fields(arch, x, y)?;
    let last = fields.last().expect("nonempty");
    Ok((last.xx[(0, 0)], last.xy[(0, 0)], last.yy[(0, 0)]))
}

/// Output kernel `K(x, y)`.
pub fn kernel(arch: &ArchSpec, x: &[f64], y: &[f64]) -> Result<f64, KernelError> {
    let plan = field::Plan::new(arch);
    field::check_len(arch, x)?;
    field::check_len(arch, y)?;
    let hx = plan.self_history(x)?;
    let hy = plan.self_history(y)?;
    plan.cross_output(x, y, &hx, &hy)
}

/// Gram matrix of the output kernel over `points`.
///
/// Each self history is computed once; off-diagonal pairs are evaluated
/// independently in parallel, so the result does not depend on scheduling.
pub fn kernel_matrix(arch: &ArchSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>, KernelError> {
    for p in points {
        field::check_len(arch, p)?;
    }
    let plan = field::Plan::new(arch);
    let histories = points
        .par_iter()
        .map(|p| plan.self_history(p))
        .collect::<Result<Vec<_>, _>>()?;
    let m = points.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| plan.cross_output(&points[i], &points[j], &histories[i], &histories[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut k = DMatrix::zeros(m, m);
    for (i, h) in histories.iter().enumerate() {
        k[(i, i)] = h.last().expect("nonempty")[(0, 0)];
    }
    for (&(i, j), v) in pairs.iter().zip(values) {
        k[(i, j)] = v;
        k[(j, i)] = v;
    }
    Ok(k)
}

/// `sqrt(K(x,x) - 2 K(x,y) + K(y,y))`, clamping rounding-level negatives.
pub fn rkhs_distance(kxx: f64, kxy: f64, kyy: f64) -> Result<f64, KernelError> {
    let r = kxx - 2.0 * kxy + kyy;
    if r >= 0.0 {
        return Ok(r.sqrt());
    }
    let scale = kxx.abs() + 2.0 * kxy.abs() + kyy.abs();
    if r >= -DISTANCE_TOL * scale.max(f64::MIN_POSITIVE) {
        Ok(0.0)
    } else {
        Err(KernelError::NegativeDistance(r))
    }
}
