//! Infinite-width Gaussian-process kernels of ReLU networks, certified
//! robustness radii, and Monte-Carlo checks of the bounds behind them.
// Comparisons are written `!(a > b)` where NaN must take the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arch;
pub mod certificate;
pub mod covering;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod norm;
pub mod numeric;
pub mod randnet;
pub mod rng;
