//! Finite-width random networks: sampling, forward and backward passes,
//! empirical kernels and minimal-perturbation search.

mod attack;
mod empirical;
mod network;
mod scaling;

use thiserror::Error;

use crate::arch::ArchError;

pub use attack::{boundary_search, linear_estimate, Affine, AttackRecord, GRADIENT_CAP};
pub use empirical::{empirical_kernel, Estimator, MIN_DRAWS};
pub use network::{
    hidden_layer_count, init_random, layer_channels, ForwardPass, LayerParams, RandomNetwork, ScalarModel,
};
pub use scaling::{family_member, scaling_experiment, ScalingConfig, ScalingRecord, ScalingResult, ScalingRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandnetError {
    #[error("invalid widths: {0}")]
    Widths(String),
    #[error("input has {got} entries, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("{got} draws requested, at least {min} required")]
    TooFewDraws { got: usize, min: usize },
    #[error("start point coordinate {0} lies outside [0, 1]")]
    OutsideBox(usize),
    #[error("network output {0} at the start point has no sign")]
    DegenerateStart(f64),
    #[error("tolerance {0} must be positive")]
    Tolerance(f64),
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
}
