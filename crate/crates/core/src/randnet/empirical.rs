use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{init_random, layer_channels};
use super::RandnetError;
use crate::arch::{ArchSpec, LayerSpec};
use crate::kernel::psi::psi_clamped;
use crate::rng;

/// Fewest network draws accepted by `empirical_kernel`.
pub const MIN_DRAWS: usize = 100;

/// How each network draw contributes to the covariance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Outer product `phi(x_i) phi(x_j)` of the sampled outputs.
    #[default]
    Sampled,
    /// Exact covariance of the output given the last hidden layer, i.e. the
    /// sampled estimator with the final Gaussian layer integrated out.
    Conditional,
    /// Conditional estimator one layer deeper: the last hidden layer's ReLU
    /// moments are computed in closed form from its sampled input. Needs a
    /// single-pixel architecture whose flatten layer directly follows a
    /// parameterized layer.
    Collapsed,
}

/// Monte-Carlo covariance of the scalar output of random networks over `points`.
///
/// Single-pixel architectures are sampled layer by layer: given the previous
/// activations `A` (points x units), the next pre-activations are independent
/// across units with covariance `sigma_b^2 + sigma_w^2 / n A A^T`, which is the
/// exact finite-width law at the cost of `points x width` normals per layer.
/// Other architectures instantiate full networks.
pub fn empirical_kernel(
    arch: &ArchSpec,
    widths: &[usize],
    points: &[Vec<f64>],
    draws: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<DMatrix<f64>, RandnetError> {
    if draws < MIN_DRAWS {
        return Err(RandnetError::TooFewDraws { got: draws, min: MIN_DRAWS });
    }
    let channels = layer_channels(arch, widths)?;
    for p in points {
        if p.len() != arch.input_len() {
            return Err(RandnetError::Dimension { expected: arch.input_len(), got: p.len() });
        }
    }
    let single_pixel = arch.input_grid().size() == 1;
    if estimator == Estimator::Collapsed {
        let f = arch.flatten_index();
        let direct = f > 0
            && matches!(arch.layers()[f - 1], LayerSpec::InputConv { .. } | LayerSpec::Nonlinear { .. });
        if !single_pixel || !direct {
            return Err(RandnetError::Config(
                "collapsed estimator needs a single-pixel arch with a parameterized layer before flatten".into(),
            ));
        }
    }
    let per_draw: Vec<DMatrix<f64>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            if single_pixel {
                Ok(marginal_draw(arch, &channels, points, seed, d as u64, estimator))
            } else {
                network_draw(arch, widths, points, rng::subseed(seed, "network") ^ d as u64, estimator)
            }
        })
        .collect::<Result<_, RandnetError>>()?;
    let m = points.len();
    let mut acc = DMatrix::zeros(m, m);
    for k in &per_draw {
        acc += k;
    }
    Ok(acc / draws as f64)
}

fn relu_matrix(h: &DMatrix<f64>) -> DMatrix<f64> {
    h.map(|v| v.max(0.0))
}

/// `sigma_b^2 + sigma_w^2 / n A A^T` for activations `A` with `n` columns.
fn unit_covariance(a: &DMatrix<f64>, sigma_w: f64, sigma_b: f64) -> DMatrix<f64> {
    let n = a.ncols() as f64;
    (a * a.transpose()).map(|v| sigma_b * sigma_b + sigma_w * sigma_w * v / n)
}

/// `E[relu(h) relu(h)^T]` for `h ~ N(0, cov)`.
fn relu_moment(cov: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        let s = (cov[(i, i)] * cov[(j, j)]).sqrt();
        if s <= 0.0 {
            return 0.0;
        }
        0.5 * s * psi_clamped((cov[(i, j)] / s).clamp(-1.0, 1.0))
    })
}

/// `units` independent columns distributed as `N(0, cov)`.
fn sample_units<R: rand::Rng>(cov: &DMatrix<f64>, units: usize, rng: &mut R) -> DMatrix<f64> {
    let m = cov.nrows();
    let eig = cov.clone().symmetric_eigen();
    let scale = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&scale);
    let g = DMatrix::from_fn(m, units, |_, _| StandardNormal.sample(rng));
    root * g
}

fn marginal_draw(
    arch: &ArchSpec,
    channels: &[usize],
    points: &[Vec<f64>],
    seed: u64,
    draw: u64,
    estimator: Estimator,
) -> DMatrix<f64> {
    let mut rng = rng::stream(seed, draw);
    let m = points.len();
    let x = DMatrix::from_fn(m, arch.input_len(), |i, j| points[i][j]);
    let mut outputs: Vec<DMatrix<f64>> = Vec::with_capacity(arch.layers().len());
    let collapse_at = arch.flatten_index() - 1;
    for (i, layer) in arch.layers().iter().enumerate() {
        if estimator == Estimator::Collapsed && i == collapse_at {
            let (sigma_w, sigma_b) = layer.variances().expect("checked parameterized");
            let a = if i == 0 { x.clone() } else { relu_matrix(&outputs[i - 1]) };
            let moment = relu_moment(&unit_covariance(&a, sigma_w, sigma_b));
            let (fw, fb) = arch.layers()[i + 1].variances().expect("flatten has variances");
            return moment.map(|v| fb * fb + fw * fw * v);
        }
        let h = match layer {
            LayerSpec::InputConv { sigma_w, sigma_b, .. } => {
                sample_units(&unit_covariance(&x, *sigma_w, *sigma_b), channels[i], &mut rng)
            }
            LayerSpec::Nonlinear { sigma_w, sigma_b, .. } => {
                let a = relu_matrix(&outputs[i - 1]);
                sample_units(&unit_covariance(&a, *sigma_w, *sigma_b), channels[i], &mut rng)
            }
            LayerSpec::Skip { gap } => &outputs[i - 1] + &outputs[i - gap - 1],
            LayerSpec::Pool { .. } | LayerSpec::Output => outputs[i - 1].clone(),
            LayerSpec::Flatten { sigma_w, sigma_b } => {
                let cov = unit_covariance(&relu_matrix(&outputs[i - 1]), *sigma_w, *sigma_b);
                match estimator {
                    Estimator::Conditional | Estimator::Collapsed => return cov,
                    Estimator::Sampled => sample_units(&cov, 1, &mut rng),
                }
            }
        };
        outputs.push(h);
    }
    let phi = outputs.last().expect("nonempty");
    phi * phi.transpose()
}

fn network_draw(
    arch: &ArchSpec,
    widths: &[usize],
    points: &[Vec<f64>],
    seed: u64,
    estimator: Estimator,
) -> Result<DMatrix<f64>, RandnetError> {
    let net = init_random(arch, widths, seed)?;
    let passes = points.iter().map(|p| net.forward(p)).collect::<Result<Vec<_>, _>>()?;
    let m = points.len();
    Ok(match estimator {
        Estimator::Sampled => DMatrix::from_fn(m, m, |i, j| passes[i].output * passes[j].output),
        Estimator::Conditional | Estimator::Collapsed => {
            let f = arch.flatten_index();
            let (sigma_w, sigma_b) = arch.layers()[f].variances().expect("flatten has variances");
            let feats: Vec<Vec<f64>> =
                passes.iter().map(|p| p.layers[f - 1].iter().map(|v| v.max(0.0)).collect()).collect();
            let n_in = net.params(f).expect("flatten params").n_in as f64;
            DMatrix::from_fn(m, m, |i, j| {
                let dot: f64 = feats[i].iter().zip(&feats[j]).map(|(a, b)| a * b).sum();
                sigma_b * sigma_b + sigma_w * sigma_w * dot / n_in
            })
        }
    })
}
